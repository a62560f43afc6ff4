#include "gedf/spatial_key.hpp"

#include <cmath>
#include <stdexcept>

namespace gedf {

namespace {
constexpr int kKeyBits = 21;
constexpr std::int64_t kKeyOffset = std::int64_t{1} << (kKeyBits - 1);
constexpr std::uint64_t kKeyMask = (std::uint64_t{1} << kKeyBits) - 1;
}  // namespace

std::uint64_t pack_lattice_key(const Eigen::Vector3i& index) {
  std::uint64_t key = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t shifted = static_cast<std::int64_t>(index[axis]) + kKeyOffset;
    if (shifted < 0 || shifted > static_cast<std::int64_t>(kKeyMask)) {
      throw std::out_of_range("lattice index outside the +-2^20 key range");
    }
    key |= static_cast<std::uint64_t>(shifted) << (kKeyBits * axis);
  }
  return key;
}

Eigen::Vector3i unpack_lattice_key(std::uint64_t key) {
  Eigen::Vector3i index;
  for (int axis = 0; axis < 3; ++axis) {
    const auto field = static_cast<std::int64_t>((key >> (kKeyBits * axis)) & kKeyMask);
    index[axis] = static_cast<int>(field - kKeyOffset);
  }
  return index;
}

Eigen::Vector3i lattice_index(const Eigen::Vector3d& p, double cell) {
  return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell)),
                         static_cast<int>(std::floor(p.y() / cell)),
                         static_cast<int>(std::floor(p.z() / cell)));
}

}  // namespace gedf
