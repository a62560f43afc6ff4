#include "gedf/map_serde.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace gedf {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'E', 'D', 'F'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const char* data, std::size_t n) {
    out_.write(data, static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("map write failed");
    count_ += n;
  }
  template <class T>
  void integer(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFFu);
    bytes(buf, sizeof(T));
  }
  void f32(double value) { integer(std::bit_cast<std::uint32_t>(static_cast<float>(value))); }

  std::size_t count() const { return count_; }

 private:
  std::ostream& out_;
  std::size_t count_ = 0;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool bytes(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }
  template <class T>
  bool integer(T& value) {
    unsigned char buf[sizeof(T)];
    if (!bytes(reinterpret_cast<char*>(buf), sizeof(T))) return false;
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    }
    value = static_cast<T>(u);
    return true;
  }
  bool f32(double& value) {
    std::uint32_t bits = 0;
    if (!integer(bits)) return false;
    value = static_cast<double>(std::bit_cast<float>(bits));
    return true;
  }

 private:
  std::istream& in_;
};

std::string index_text(const BlockIndex& i) {
  return "(" + std::to_string(i.x()) + ", " + std::to_string(i.y()) + ", " + std::to_string(i.z()) + ")";
}

}  // namespace

std::size_t serialized_size(std::size_t block_count, std::size_t kernel_count) {
  return kMapHeaderBytes + kBlockRecordBytes * block_count + kKernelBytes * kernel_count;
}

std::size_t save_map(const SparseGmmMap& map, std::ostream& sink) {
  Writer w(sink);
  w.bytes(kMagic.data(), kMagic.size());
  w.integer<std::uint16_t>(kMapFormatVersion);
  w.f32(map.block_size());
  w.f32(map.overlap_margin());
  w.f32(map.global_mae());
  for (int a = 0; a < 3; ++a) w.f32(map.bounds().min()[a]);
  for (int a = 0; a < 3; ++a) w.f32(map.bounds().max()[a]);
  w.integer<std::uint32_t>(static_cast<std::uint32_t>(map.blocks().size()));

  for (const Block& b : map.blocks()) {
    for (int a = 0; a < 3; ++a) w.integer<std::int32_t>(b.index[a]);
    w.integer<std::uint16_t>(static_cast<std::uint16_t>(b.fit.kernels.size()));
    w.f32(b.fit.mae);
    w.integer<std::uint8_t>(b.fit.converged ? 1 : 0);
    for (const GaussianKernel& k : b.fit.kernels) {
      w.f32(k.weight);
      for (int a = 0; a < 3; ++a) w.f32(k.center[a]);
      for (int a = 0; a < 3; ++a) w.f32(k.length_scales[a]);
    }
  }
  sink.flush();
  if (!sink) throw std::runtime_error("map write failed");
  return w.count();
}

std::size_t save_map(const SparseGmmMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open map for writing: " + path);
  return save_map(map, out);
}

SparseGmmMap load_map(std::istream& source) {
  using Kind = MapFormatError::Kind;
  Reader r(source);
  std::array<char, 4> magic{};
  if (!r.bytes(magic.data(), magic.size())) {
    throw MapFormatError(Kind::kTruncatedHeader, "truncated header");
  }
  if (magic != kMagic) {
    throw MapFormatError(Kind::kBadMagic, "format mismatch: bad magic, not a GEDF map");
  }
  std::uint16_t version = 0;
  double block_size = 0.0, overlap = 0.0, global_mae = 0.0;
  Eigen::Vector3d lo, hi;
  std::uint32_t count = 0;
  if (!r.integer(version)) throw MapFormatError(Kind::kTruncatedHeader, "truncated header");
  if (version != kMapFormatVersion) {
    throw MapFormatError(Kind::kUnsupportedVersion,
                         "unsupported map version " + std::to_string(version));
  }
  bool ok = r.f32(block_size) && r.f32(overlap) && r.f32(global_mae);
  for (int a = 0; a < 3 && ok; ++a) ok = r.f32(lo[a]);
  for (int a = 0; a < 3 && ok; ++a) ok = r.f32(hi[a]);
  ok = ok && r.integer(count);
  if (!ok) throw MapFormatError(Kind::kTruncatedHeader, "truncated header");
  if (!(block_size > 0.0) || !(overlap > 0.0) || !(2.0 * overlap < block_size)) {
    throw MapFormatError(Kind::kInvalidBlock, "invalid block size or overlap margin in header");
  }

  std::vector<Block> blocks;
  blocks.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t n = 0; n < count; ++n) {
    Block b;
    ok = r.integer(b.index[0]) && r.integer(b.index[1]) && r.integer(b.index[2]);
    if (!ok) {
      throw MapFormatError(Kind::kTruncatedBlock,
                           "truncated block record #" + std::to_string(n));
    }
    std::uint16_t k = 0;
    std::uint8_t flags = 0;
    if (!(r.integer(k) && r.f32(b.fit.mae) && r.integer(flags))) {
      throw MapFormatError(Kind::kTruncatedBlock, "truncated block record #" + std::to_string(n) +
                                                      " at index " + index_text(b.index));
    }
    if (k == 0) {
      throw MapFormatError(Kind::kInvalidBlock,
                           "block " + index_text(b.index) + " has no kernels");
    }
    b.fit.converged = (flags & 1u) != 0;
    b.fit.kernels.resize(k);
    for (GaussianKernel& kern : b.fit.kernels) {
      ok = r.f32(kern.weight);
      for (int a = 0; a < 3 && ok; ++a) ok = r.f32(kern.center[a]);
      for (int a = 0; a < 3 && ok; ++a) ok = r.f32(kern.length_scales[a]);
      if (!ok) {
        throw MapFormatError(Kind::kTruncatedBlock, "truncated block record #" +
                                                        std::to_string(n) + " at index " +
                                                        index_text(b.index));
      }
      if (!(kern.length_scales.minCoeff() > 0.0) || !kern.length_scales.allFinite()) {
        throw MapFormatError(Kind::kInvalidBlock,
                             "non-positive length scale in block " + index_text(b.index));
      }
      if (!std::isfinite(kern.weight) || !kern.center.allFinite()) {
        throw MapFormatError(Kind::kInvalidBlock,
                             "non-finite kernel parameter in block " + index_text(b.index));
      }
    }
    blocks.push_back(std::move(b));
  }
  try {
    return SparseGmmMap(block_size, overlap, std::move(blocks), Eigen::AlignedBox3d(lo, hi),
                        global_mae);
  } catch (const std::logic_error& e) {
    throw MapFormatError(Kind::kInvalidBlock, e.what());
  }
}

SparseGmmMap load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("input not found: " + path);
  return load_map(in);
}

}  // namespace gedf
