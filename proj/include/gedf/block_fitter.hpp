#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "gedf/edt.hpp"
#include "gedf/field_core.hpp"
#include "gedf/lm_solver.hpp"

namespace gedf {

struct LengthScaleBounds {
  double min = 0.05;
  double max = 4.0;
};

struct FitConfig {
  double mae_tolerance = 0.05;
  int max_kernels = 64;
  int kernel_increment = 2;
  int initial_kernels_empty = 1;
  // Seed budget for blocks whose samples touch the surface.
  int initial_kernels_surface = 4;
  int max_lm_iterations = 100;
  double lm_initial_damping = 1e-3;
  LengthScaleBounds length_scale_bounds;
  double initial_length_scale = 0.5;
  // Length scale of kernels inserted while growing capacity.
  double growth_length_scale = 0.2;
  // Magnitude of the negative weight seeded at EDT minima.
  double minimum_seed_weight = 0.2;
  // Kernels with |w| below this are pruned after fitting.
  double prune_weight = 1e-4;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct FittedBlock {
  std::vector<GaussianKernel> kernels;
  double mae = 0.0;
  int sample_count = 0;
  bool converged = false;
};

/// Voxel-center regression samples taken from an EDT grid.
struct FitSamples {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> targets;
};

FitSamples samples_from_grid(const LocalEdtGrid& edt);

/// Packs kernels as [w, mu_x, mu_y, mu_z, log l_x, log l_y, log l_z] per kernel.
Eigen::VectorXd pack_kernels(std::span<const GaussianKernel> kernels);
std::vector<GaussianKernel> unpack_kernels(const Eigen::VectorXd& params);

/// Residuals d_hat(x_s) - d_gt(x_s) over the samples, as an LM problem in the
/// packed parameterization. Length scales are clamped to `bounds` in log space
/// every time a step is applied.
class KernelFitProblem final : public LeastSquaresProblem {
 public:
  KernelFitProblem(const FitSamples& samples, int kernel_count, LengthScaleBounds bounds);

  int tangent_dim() const override { return 7 * kernel_count_; }
  bool evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                Eigen::MatrixXd* jacobian, double& cost) override;
  Eigen::VectorXd plus(const Eigen::VectorXd& params, const Eigen::VectorXd& delta) const override;

 private:
  const FitSamples& samples_;
  int kernel_count_;
  double log_min_;
  double log_max_;
};

/// Seeds kernels at EDT extrema: positive weight equal to the local distance at
/// maxima, negative weight of `cfg.minimum_seed_weight` at minima. When more
/// extrema than `budget` exist, those with the largest |distance - field| are
/// kept, where `field` is the mixture given in `existing`. With no extrema a
/// single kernel is placed at the grid center with the mean distance as weight.
std::vector<GaussianKernel> initialize_kernels(const ExtremaSet& extrema, const LocalEdtGrid& edt,
                                               int budget, const FitConfig& cfg,
                                               std::span<const GaussianKernel> existing = {});

/// Fits the kernel set of one block against every voxel center of `edt`,
/// growing capacity until the MAE drops below tolerance or max_kernels is hit.
FittedBlock fit_block(const LocalEdtGrid& edt, const ExtremaSet& extrema, const FitConfig& cfg);

double mean_absolute_error(std::span<const GaussianKernel> kernels, const FitSamples& samples);

}  // namespace gedf
