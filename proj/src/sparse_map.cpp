#include "gedf/sparse_map.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gedf/edt.hpp"
#include "gedf/kdtree.hpp"
#include "gedf/spatial_key.hpp"

namespace gedf {

namespace {

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

BlockIndex block_of(const Eigen::Vector3d& p, double block_size) {
  return lattice_index(p, block_size);
}

// Per-axis ramp factor and its derivative for a block spanning [lo, lo + size].
struct AxisWeight {
  double value;
  double derivative;
};

AxisWeight axis_weight(double x, double lo, double size, double margin) {
  const double band = 2.0 * margin;
  if (x < lo + margin) {
    const double t = (x - (lo - margin)) / band;
    return {smoothstep(t), smoothstep_derivative(t) / band};
  }
  if (x > lo + size - margin) {
    const double t = ((lo + size + margin) - x) / band;
    return {smoothstep(t), -smoothstep_derivative(t) / band};
  }
  return {1.0, 0.0};
}

struct RawWeight {
  std::size_t block;
  double weight;
  Eigen::Vector3d gradient;
};

}  // namespace

double MapConfig::effective_halo() const {
  return edt_halo >= 0.0 ? edt_halo : activation_distance + 0.5 * block_size + overlap_margin;
}

void MapConfig::validate() const {
  if (!(block_size > 0.0)) throw std::invalid_argument("map: block_size must be > 0");
  if (!(overlap_margin > 0.0) || !(overlap_margin < 0.5 * block_size)) {
    throw std::invalid_argument("map: overlap_margin must satisfy 0 < margin < block_size / 2");
  }
  if (!(activation_distance >= 0.5 * block_size)) {
    throw std::invalid_argument("map: activation_distance must be >= block_size / 2");
  }
  if (!(edt_voxel_size > 0.0) || edt_voxel_size > block_size) {
    throw std::invalid_argument("map: edt_voxel_size must be in (0, block_size]");
  }
  const double ratio = block_size / edt_voxel_size;
  if (std::abs(ratio - std::round(ratio)) > 1e-6) {
    throw std::invalid_argument("map: block_size must be a multiple of edt_voxel_size");
  }
  fit.validate();
}

std::uint64_t pack_block_key(const BlockIndex& index) { return pack_lattice_key(index); }

BlockIndex unpack_block_key(std::uint64_t key) { return unpack_lattice_key(key); }

SparseGmmMap::SparseGmmMap(double block_size, double overlap_margin, std::vector<Block> blocks,
                           Eigen::AlignedBox3d bounds, double global_mae)
    : block_size_(block_size),
      overlap_margin_(overlap_margin),
      blocks_(std::move(blocks)),
      bounds_(bounds),
      global_mae_(global_mae) {
  std::sort(blocks_.begin(), blocks_.end(), [](const Block& a, const Block& b) {
    return pack_block_key(a.index) < pack_block_key(b.index);
  });
  lookup_.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (!lookup_.emplace(pack_block_key(blocks_[i].index), i).second) {
      throw std::invalid_argument("duplicate block index in map");
    }
  }
}

std::size_t SparseGmmMap::total_kernels() const {
  std::size_t n = 0;
  for (const Block& b : blocks_) n += b.fit.kernels.size();
  return n;
}

std::size_t SparseGmmMap::unconverged_blocks() const {
  return static_cast<std::size_t>(std::count_if(
      blocks_.begin(), blocks_.end(), [](const Block& b) { return !b.fit.converged; }));
}

std::ptrdiff_t SparseGmmMap::find(const BlockIndex& index) const {
  const auto it = lookup_.find(pack_block_key(index));
  return it == lookup_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

Eigen::AlignedBox3d SparseGmmMap::extended_domain(const BlockIndex& index) const {
  const Eigen::Vector3d lo = block_size_ * index.cast<double>();
  const Eigen::Vector3d pad = Eigen::Vector3d::Constant(overlap_margin_);
  return {lo - pad, lo + Eigen::Vector3d::Constant(block_size_) + pad};
}

namespace {

// Unnormalized weights of up to eight candidate blocks; returns the count.
int raw_weights(const SparseGmmMap& map, const Eigen::Vector3d& x,
                std::array<RawWeight, 8>& out) {
  const double size = map.block_size();
  const double margin = map.overlap_margin();
  Eigen::Vector3i lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<int>(std::floor((x[a] - margin) / size));
    hi[a] = static_cast<int>(std::floor((x[a] + margin) / size));
  }
  int count = 0;
  for (int k = lo.z(); k <= hi.z(); ++k) {
    for (int j = lo.y(); j <= hi.y(); ++j) {
      for (int i = lo.x(); i <= hi.x(); ++i) {
        const BlockIndex index(i, j, k);
        const std::ptrdiff_t pos = map.find(index);
        if (pos < 0) continue;
        std::array<AxisWeight, 3> axis;
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          const double origin = size * index[a];
          if (!(x[a] > origin - margin && x[a] < origin + size + margin)) {
            inside = false;
            break;
          }
          axis[a] = axis_weight(x[a], origin, size, margin);
        }
        if (!inside) continue;
        const double w = axis[0].value * axis[1].value * axis[2].value;
        if (!(w > 0.0)) continue;
        const Eigen::Vector3d grad(axis[0].derivative * axis[1].value * axis[2].value,
                                   axis[0].value * axis[1].derivative * axis[2].value,
                                   axis[0].value * axis[1].value * axis[2].derivative);
        out[count++] = {static_cast<std::size_t>(pos), w, grad};
      }
    }
  }
  return count;
}

}  // namespace

std::vector<BlendWeight> SparseGmmMap::blend_weights(const Eigen::Vector3d& x) const {
  std::array<RawWeight, 8> raw;
  const int n = raw_weights(*this, x, raw);
  std::vector<BlendWeight> out;
  if (n == 0) return out;
  double total = 0.0;
  Eigen::Vector3d total_grad = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    total += raw[i].weight;
    total_grad += raw[i].gradient;
  }
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double alpha = raw[i].weight / total;
    out.push_back({raw[i].block, alpha, (raw[i].gradient - alpha * total_grad) / total});
  }
  return out;
}

FieldSample SparseGmmMap::query(const Eigen::Vector3d& x) const {
  std::array<RawWeight, 8> raw;
  const int n = raw_weights(*this, x, raw);
  FieldSample out;
  if (n == 0) return out;
  out.valid = true;
  if (n == 1) {
    const MixtureValue m = eval_mixture(blocks_[raw[0].block].fit.kernels, x);
    out.value = m.value;
    out.gradient = m.gradient;
    return out;
  }
  double total = 0.0;
  double blended = 0.0;
  Eigen::Vector3d total_grad = Eigen::Vector3d::Zero();
  Eigen::Vector3d blended_grad = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const MixtureValue m = eval_mixture(blocks_[raw[i].block].fit.kernels, x);
    total += raw[i].weight;
    total_grad += raw[i].gradient;
    blended += raw[i].weight * m.value;
    blended_grad += raw[i].gradient * m.value + raw[i].weight * m.gradient;
  }
  out.value = blended / total;
  out.gradient = (blended_grad - out.value * total_grad) / total;
  return out;
}

std::vector<FieldSample> SparseGmmMap::query_batch(std::span<const Eigen::Vector3d> xs) const {
  std::vector<FieldSample> out(xs.size());
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = query(xs[i]);
  return out;
}

std::vector<BlockIndex> select_active_blocks(std::span<const Eigen::Vector3d> points,
                                             const MapConfig& cfg) {
  std::unordered_map<std::uint64_t, BlockIndex> occupied;
  for (const Eigen::Vector3d& p : points) {
    const BlockIndex b = block_of(p, cfg.block_size);
    occupied.emplace(pack_block_key(b), b);
  }
  const KdTree tree(points);
  const int reach = static_cast<int>(std::ceil(cfg.activation_distance / cfg.block_size)) + 1;
  std::unordered_map<std::uint64_t, BlockIndex> active = occupied;
  std::unordered_map<std::uint64_t, bool> tested;
  for (const auto& [key, b] : occupied) {
    for (int dz = -reach; dz <= reach; ++dz) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const BlockIndex c = b + BlockIndex(dx, dy, dz);
          const std::uint64_t ck = pack_block_key(c);
          if (active.contains(ck) || !tested.emplace(ck, true).second) continue;
          const Eigen::Vector3d center =
              cfg.block_size * (c.cast<double>() + Eigen::Vector3d::Constant(0.5));
          if (tree.nearest(center).distance <= cfg.activation_distance) active.emplace(ck, c);
        }
      }
    }
  }
  std::vector<std::pair<std::uint64_t, BlockIndex>> sorted(active.begin(), active.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<BlockIndex> out;
  out.reserve(sorted.size());
  for (const auto& kv : sorted) out.push_back(kv.second);
  return out;
}

LocalEdtGrid block_ground_truth(std::span<const Eigen::Vector3d> nearby_points,
                                const BlockIndex& index, const MapConfig& cfg) {
  const double v = cfg.edt_voxel_size;
  const Eigen::Vector3d origin = cfg.block_size * index.cast<double>();
  const double reach = cfg.overlap_margin + cfg.effective_halo();
  const OccupancyGrid occupancy = voxelize_region(nearby_points, origin, cfg.block_size, reach, v);
  const LocalEdtGrid full = exact_edt(occupancy, cfg.activation_distance);

  const int h = halo_voxels(reach, v);
  const int margin_voxels = static_cast<int>(std::floor(cfg.overlap_margin / v + 1e-9));
  const int core = static_cast<int>(std::lround(cfg.block_size / v));
  const int first = h - margin_voxels;
  const int n = core + 1 + 2 * margin_voxels;

  LocalEdtGrid crop;
  crop.geometry.voxel_size = v;
  crop.geometry.dims = Eigen::Vector3i::Constant(n);
  crop.geometry.origin = full.geometry.center(first, first, first);
  crop.distances.resize(crop.geometry.size());
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        crop.distances[crop.geometry.linear(i, j, k)] = full.at(first + i, first + j, first + k);
      }
    }
  }
  return crop;
}

SparseGmmMap build_map(std::span<const Eigen::Vector3d> points, const MapConfig& cfg,
                       BuildReport* report) {
  cfg.validate();
  if (points.empty()) throw std::invalid_argument("build_map: empty point cloud");
  const auto start = std::chrono::steady_clock::now();

  const std::vector<BlockIndex> active = select_active_blocks(points, cfg);

  std::unordered_map<std::uint64_t, std::vector<Eigen::Vector3d>> bins;
  for (const Eigen::Vector3d& p : points) {
    bins[pack_block_key(block_of(p, cfg.block_size))].push_back(p);
  }

  // Round the block geometry to the precision it is serialized at.
  MapConfig stored = cfg;
  stored.block_size = to_float_precision(cfg.block_size);
  stored.overlap_margin = to_float_precision(cfg.overlap_margin);

  const double reach = cfg.overlap_margin + cfg.effective_halo();
  const int bin_reach = static_cast<int>(std::ceil(reach / cfg.block_size));
  std::vector<Block> blocks(active.size());
  const auto count = static_cast<std::ptrdiff_t>(active.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < count; ++b) {
    const BlockIndex& index = active[b];
    std::vector<Eigen::Vector3d> nearby;
    for (int dz = -bin_reach; dz <= bin_reach; ++dz) {
      for (int dy = -bin_reach; dy <= bin_reach; ++dy) {
        for (int dx = -bin_reach; dx <= bin_reach; ++dx) {
          const auto it = bins.find(pack_block_key(index + BlockIndex(dx, dy, dz)));
          if (it != bins.end()) nearby.insert(nearby.end(), it->second.begin(), it->second.end());
        }
      }
    }
    const LocalEdtGrid edt = block_ground_truth(nearby, index, cfg);
    const ExtremaSet extrema = find_extrema(edt);
    FittedBlock fit = fit_block(edt, extrema, cfg.fit);
    for (GaussianKernel& k : fit.kernels) {
      k.weight = to_float_precision(k.weight);
      k.center = k.center.unaryExpr(&to_float_precision);
      k.length_scales = k.length_scales.unaryExpr(&to_float_precision);
    }
    fit.mae = to_float_precision(fit.mae);
    blocks[b] = Block{index, std::move(fit)};
  }

  double weighted = 0.0;
  double samples = 0.0;
  Eigen::AlignedBox3d bounds;
  std::size_t occupied = 0;
  for (const Block& block : blocks) {
    weighted += block.fit.mae * block.fit.sample_count;
    samples += block.fit.sample_count;
    const Eigen::Vector3d lo = cfg.block_size * block.index.cast<double>();
    bounds.extend(lo - Eigen::Vector3d::Constant(cfg.overlap_margin));
    bounds.extend(lo + Eigen::Vector3d::Constant(cfg.block_size + cfg.overlap_margin));
    if (bins.contains(pack_block_key(block.index))) ++occupied;
  }
  bounds.min() = bounds.min().cast<float>().cast<double>();
  bounds.max() = bounds.max().cast<float>().cast<double>();
  const double global_mae = to_float_precision(samples > 0.0 ? weighted / samples : 0.0);

  SparseGmmMap map(stored.block_size, stored.overlap_margin, std::move(blocks), bounds,
                   global_mae);
  if (report != nullptr) {
    report->active_blocks = map.blocks().size();
    report->occupied_blocks = occupied;
    report->unconverged_blocks = map.unconverged_blocks();
    report->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return map;
}

namespace {

ReconstructionMetrics summarize(std::vector<double> errors, std::vector<double> grad_norms,
                                double outlier_trim) {
  if (errors.empty()) throw std::runtime_error("eval: no valid probes inside the map");
  // Drop the largest errors (and their gradient samples).
  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
  const auto trimmed =
      static_cast<std::size_t>(std::floor(outlier_trim * static_cast<double>(errors.size())));
  const std::size_t keep = errors.size() - std::min(trimmed, errors.size() - 1);

  std::vector<double> e(keep), g(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    e[i] = errors[order[i]];
    g[i] = grad_norms[order[i]];
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  ReconstructionMetrics m;
  std::tie(m.mae, m.std) = mean_std(e);
  std::tie(m.grad_mean, m.grad_std) = mean_std(g);
  // e is sorted ascending.
  m.median = keep % 2 == 1 ? e[keep / 2] : 0.5 * (e[keep / 2 - 1] + e[keep / 2]);
  m.probes = keep;
  m.trimmed = errors.size() - keep;
  return m;
}

}  // namespace

ReconstructionMetrics eval_reconstruction(const SparseGmmMap& map, const DistanceFn& truth,
                                          const EvalOptions& options) {
  if (!(options.probe_step > 0.0)) throw std::invalid_argument("eval: probe_step must be > 0");
  if (!(options.outlier_trim >= 0.0 && options.outlier_trim < 1.0)) {
    throw std::invalid_argument("eval: outlier_trim must be in [0, 1)");
  }
  const Eigen::AlignedBox3d& box = map.bounds();
  if (box.isEmpty()) throw std::runtime_error("eval: map has no blocks");
  const Eigen::Vector3i steps =
      ((box.max() - box.min()) / options.probe_step).array().floor().cast<int>() + 1;

  std::vector<double> errors;
  std::vector<double> grads;
  for (int k = 0; k < steps.z(); ++k) {
    for (int j = 0; j < steps.y(); ++j) {
      for (int i = 0; i < steps.x(); ++i) {
        const Eigen::Vector3d x = box.min() + options.probe_step * Eigen::Vector3d(i, j, k);
        const FieldSample s = map.query(x);
        if (!s.valid) continue;
        const double d = truth(x);
        if (d < options.min_truth_distance) continue;
        errors.push_back(std::abs(s.value - d));
        grads.push_back(s.gradient.norm());
      }
    }
  }
  return summarize(std::move(errors), std::move(grads), options.outlier_trim);
}

ReconstructionMetrics eval_reconstruction(const SparseGmmMap& map,
                                          std::span<const Eigen::Vector3d> truth_points,
                                          const EvalOptions& options) {
  if (truth_points.empty()) throw std::invalid_argument("eval: empty truth cloud");
  const KdTree tree(truth_points);
  return eval_reconstruction(
      map, [&tree](const Eigen::Vector3d& x) { return tree.nearest(x).distance; }, options);
}

}  // namespace gedf
