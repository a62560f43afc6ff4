#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gedf/block_fitter.hpp"
#include "gedf/field_core.hpp"

namespace gedf {

struct MapConfig {
  double block_size = 1.0;
  double overlap_margin = 0.25;
  double activation_distance = 1.5;
  double edt_voxel_size = 0.1;
  // Extra geometry gathered around each extended block before the EDT; a
  // negative value selects activation_distance + block_size / 2 + overlap_margin.
  double edt_halo = -1.0;
  FitConfig fit;

  double effective_halo() const;
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

using BlockIndex = Eigen::Vector3i;

/// floor(coordinate / block_size) per axis packed into 21-bit fields.
std::uint64_t pack_block_key(const BlockIndex& index);
BlockIndex unpack_block_key(std::uint64_t key);

struct Block {
  BlockIndex index;
  FittedBlock fit;
};

/// One block's contribution to a blended query.
struct BlendWeight {
  std::size_t block = 0;  // position in SparseGmmMap::blocks()
  double alpha = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
};

class SparseGmmMap {
 public:
  SparseGmmMap() = default;
  /// Blocks are stored sorted by packed key.
  SparseGmmMap(double block_size, double overlap_margin, std::vector<Block> blocks,
               Eigen::AlignedBox3d bounds, double global_mae);

  double block_size() const { return block_size_; }
  double overlap_margin() const { return overlap_margin_; }
  const Eigen::AlignedBox3d& bounds() const { return bounds_; }
  double global_mae() const { return global_mae_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t total_kernels() const;
  std::size_t unconverged_blocks() const;

  /// Block position for an index, or -1.
  std::ptrdiff_t find(const BlockIndex& index) const;

  /// Cube of a block expanded by the overlap margin.
  Eigen::AlignedBox3d extended_domain(const BlockIndex& index) const;

  /// Normalized blend weights of every block whose extended domain strictly
  /// contains x, with their spatial gradients. Empty outside the map.
  std::vector<BlendWeight> blend_weights(const Eigen::Vector3d& x) const;

  FieldSample query(const Eigen::Vector3d& x) const;
  std::vector<FieldSample> query_batch(std::span<const Eigen::Vector3d> xs) const;

 private:
  double block_size_ = 1.0;
  double overlap_margin_ = 0.25;
  std::vector<Block> blocks_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
  Eigen::AlignedBox3d bounds_;
  double global_mae_ = 0.0;
};

struct BuildReport {
  std::size_t active_blocks = 0;
  std::size_t occupied_blocks = 0;
  std::size_t unconverged_blocks = 0;
  double seconds = 0.0;
};

/// Cubes holding at least one point plus empty cubes whose center lies within
/// activation_distance of a point. Sorted by packed key.
std::vector<BlockIndex> select_active_blocks(std::span<const Eigen::Vector3d> points,
                                             const MapConfig& cfg);

/// Local EDT target for one block, cropped to the block cube expanded by the
/// overlap margin.
LocalEdtGrid block_ground_truth(std::span<const Eigen::Vector3d> nearby_points,
                                const BlockIndex& index, const MapConfig& cfg);

SparseGmmMap build_map(std::span<const Eigen::Vector3d> points, const MapConfig& cfg,
                       BuildReport* report = nullptr);

struct ReconstructionMetrics {
  double mae = 0.0;
  double median = 0.0;
  double std = 0.0;
  double grad_mean = 0.0;
  double grad_std = 0.0;
  std::size_t probes = 0;
  std::size_t trimmed = 0;
};

struct EvalOptions {
  double probe_step = 0.3;
  double outlier_trim = 1e-4;
  // Probes whose true distance is below this are skipped.
  double min_truth_distance = 0.0;
};

using DistanceFn = std::function<double(const Eigen::Vector3d&)>;

/// Probes a uniform grid over the map bounds restricted to the valid domain
/// and compares against `truth`. Throws std::runtime_error with no valid probes.
ReconstructionMetrics eval_reconstruction(const SparseGmmMap& map, const DistanceFn& truth,
                                          const EvalOptions& options);

/// Truth is the exact nearest-neighbor distance to `truth_points`.
ReconstructionMetrics eval_reconstruction(const SparseGmmMap& map,
                                          std::span<const Eigen::Vector3d> truth_points,
                                          const EvalOptions& options);

}  // namespace gedf
