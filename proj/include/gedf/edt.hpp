#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gedf {

/// Dense voxel lattice. Voxel (0,0,0) is centered at `origin`; voxel (i,j,k)
/// at origin + voxel_size * (i,j,k). Storage is x-fastest.
struct GridGeometry {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 0.1;
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();

  std::size_t size() const {
    return static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  }
  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims.y() + j) * dims.x() + i;
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims.x() && j < dims.y() && k < dims.z();
  }
  Eigen::Vector3d center(int i, int j, int k) const {
    return origin + voxel_size * Eigen::Vector3d(i, j, k);
  }
  /// Index of the voxel whose cell contains p (may lie outside the grid).
  Eigen::Vector3i index_of(const Eigen::Vector3d& p) const;
};

struct OccupancyGrid {
  GridGeometry geometry;
  std::vector<std::uint8_t> occupied;

  std::size_t occupied_count() const;
};

struct LocalEdtGrid {
  GridGeometry geometry;
  std::vector<double> distances;

  double at(int i, int j, int k) const { return distances[geometry.linear(i, j, k)]; }
};

struct Extremum {
  Eigen::Vector3d position;
  double distance;
  Eigen::Vector3i index;
};

struct ExtremaSet {
  std::vector<Extremum> maxima;
  std::vector<Extremum> minima;

  bool empty() const { return maxima.empty() && minima.empty(); }
};

/// Number of halo voxels needed to cover `halo` meters.
int halo_voxels(double halo, double voxel_size);

/// Occupancy over [cube_origin - halo, cube_origin + cube_size + halo] with
/// voxel centers on cube_origin + voxel_size * Z^3. Points outside the grid
/// extent are ignored.
OccupancyGrid voxelize_region(std::span<const Eigen::Vector3d> points,
                              const Eigen::Vector3d& cube_origin, double cube_size,
                              double halo, double voxel_size);

/// Exact Euclidean distance (meters) from every voxel center to the nearest
/// occupied voxel center. An all-free grid is filled with `empty_cap`.
LocalEdtGrid exact_edt(const OccupancyGrid& grid, double empty_cap);

/// Strict 26-neighborhood extrema over interior voxels.
ExtremaSet find_extrema(const LocalEdtGrid& edt);

}  // namespace gedf
