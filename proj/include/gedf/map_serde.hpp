#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "gedf/sparse_map.hpp"

namespace gedf {

inline constexpr std::uint16_t kMapFormatVersion = 1;
inline constexpr std::size_t kMapHeaderBytes = 46;
inline constexpr std::size_t kBlockRecordBytes = 19;
inline constexpr std::size_t kKernelBytes = 28;

class MapFormatError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kUnsupportedVersion, kTruncatedHeader, kTruncatedBlock, kInvalidBlock };

  MapFormatError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Exact serialized size: header + per-block record + per-kernel payload.
std::size_t serialized_size(std::size_t block_count, std::size_t kernel_count);

/// Writes the little-endian binary map; returns the number of bytes written.
/// Throws std::runtime_error when the sink fails.
std::size_t save_map(const SparseGmmMap& map, std::ostream& sink);
std::size_t save_map(const SparseGmmMap& map, const std::string& path);

/// Throws MapFormatError on malformed input.
SparseGmmMap load_map(std::istream& source);
SparseGmmMap load_map(const std::string& path);

}  // namespace gedf
