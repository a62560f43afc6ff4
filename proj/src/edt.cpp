#include "gedf/edt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gedf {

namespace {

constexpr double kFar = 1e30;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher). Squared distances
// in voxel units; `f` and `d` may not alias.
void squared_dt_1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    const double fq = f[q] + static_cast<double>(q) * q;
    double s = (fq - (f[v[k]] + static_cast<double>(v[k]) * v[k])) / (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = (fq - (f[v[k]] + static_cast<double>(v[k]) * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Eigen::Vector3i GridGeometry::index_of(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d r = (p - origin) / voxel_size;
  return Eigen::Vector3i(static_cast<int>(std::lround(r.x())), static_cast<int>(std::lround(r.y())),
                         static_cast<int>(std::lround(r.z())));
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

int halo_voxels(double halo, double voxel_size) {
  return static_cast<int>(std::ceil(halo / voxel_size - 1e-9));
}

OccupancyGrid voxelize_region(std::span<const Eigen::Vector3d> points,
                              const Eigen::Vector3d& cube_origin, double cube_size,
                              double halo, double voxel_size) {
  const int h = halo_voxels(halo, voxel_size);
  const int n = static_cast<int>(std::lround(cube_size / voxel_size));
  OccupancyGrid grid;
  grid.geometry.voxel_size = voxel_size;
  grid.geometry.origin = cube_origin - Eigen::Vector3d::Constant(h * voxel_size);
  grid.geometry.dims = Eigen::Vector3i::Constant(n + 1 + 2 * h);
  grid.occupied.assign(grid.geometry.size(), 0);
  for (const Eigen::Vector3d& p : points) {
    const Eigen::Vector3i idx = grid.geometry.index_of(p);
    if (grid.geometry.contains(idx.x(), idx.y(), idx.z())) {
      grid.occupied[grid.geometry.linear(idx.x(), idx.y(), idx.z())] = 1;
    }
  }
  return grid;
}

LocalEdtGrid exact_edt(const OccupancyGrid& grid, double empty_cap) {
  const GridGeometry& g = grid.geometry;
  LocalEdtGrid out;
  out.geometry = g;
  const std::size_t total = g.size();
  if (total == 0) return out;
  if (std::find(grid.occupied.begin(), grid.occupied.end(), std::uint8_t{1}) ==
      grid.occupied.end()) {
    out.distances.assign(total, empty_cap);
    return out;
  }

  std::vector<double> sq(total);
  for (std::size_t i = 0; i < total; ++i) sq[i] = grid.occupied[i] ? 0.0 : kFar;

  const int nmax = g.dims.maxCoeff();
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  auto pass = [&](int axis) {
    const int n = g.dims[axis];
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    Eigen::Vector3i idx;
    for (int u = 0; u < g.dims[a1]; ++u) {
      for (int w = 0; w < g.dims[a2]; ++w) {
        idx[a1] = u;
        idx[a2] = w;
        for (int q = 0; q < n; ++q) {
          idx[axis] = q;
          f[q] = sq[g.linear(idx.x(), idx.y(), idx.z())];
        }
        squared_dt_1d(f.data(), n, d.data(), v.data(), z.data());
        for (int q = 0; q < n; ++q) {
          idx[axis] = q;
          sq[g.linear(idx.x(), idx.y(), idx.z())] = d[q];
        }
      }
    }
  };
  pass(0);
  pass(1);
  pass(2);

  out.distances.resize(total);
  for (std::size_t i = 0; i < total; ++i) out.distances[i] = g.voxel_size * std::sqrt(sq[i]);
  return out;
}

ExtremaSet find_extrema(const LocalEdtGrid& edt) {
  ExtremaSet out;
  const GridGeometry& g = edt.geometry;
  for (int k = 1; k + 1 < g.dims.z(); ++k) {
    for (int j = 1; j + 1 < g.dims.y(); ++j) {
      for (int i = 1; i + 1 < g.dims.x(); ++i) {
        const double c = edt.at(i, j, k);
        bool is_max = true;
        bool is_min = true;
        for (int dk = -1; dk <= 1 && (is_max || is_min); ++dk) {
          for (int dj = -1; dj <= 1 && (is_max || is_min); ++dj) {
            for (int di = -1; di <= 1; ++di) {
              if (di == 0 && dj == 0 && dk == 0) continue;
              const double n = edt.at(i + di, j + dj, k + dk);
              if (!(c > n)) is_max = false;
              if (!(c < n)) is_min = false;
            }
          }
        }
        if (is_max) out.maxima.push_back({g.center(i, j, k), c, {i, j, k}});
        if (is_min) out.minima.push_back({g.center(i, j, k), c, {i, j, k}});
      }
    }
  }
  return out;
}

}  // namespace gedf
