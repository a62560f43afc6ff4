#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace gedf {

/// Integer lattice coordinates packed into 21-bit fields of a 64-bit key.
/// Collision-free for coordinates in [-2^20, 2^20).
std::uint64_t pack_lattice_key(const Eigen::Vector3i& index);
Eigen::Vector3i unpack_lattice_key(std::uint64_t key);

/// floor(p / cell) per axis.
Eigen::Vector3i lattice_index(const Eigen::Vector3d& p, double cell);

}  // namespace gedf
