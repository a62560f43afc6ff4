#include "gedf/block_fitter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gedf {

void FitConfig::validate() const {
  if (!(mae_tolerance > 0.0)) throw std::invalid_argument("fit: mae_tolerance must be > 0");
  if (max_kernels < 1) throw std::invalid_argument("fit: max_kernels must be >= 1");
  if (kernel_increment < 1) throw std::invalid_argument("fit: kernel_increment must be >= 1");
  if (initial_kernels_empty < 1 || initial_kernels_surface < 1) {
    throw std::invalid_argument("fit: initial kernel budgets must be >= 1");
  }
  if (max_lm_iterations < 1) throw std::invalid_argument("fit: max_lm_iterations must be >= 1");
  if (!(lm_initial_damping > 0.0)) throw std::invalid_argument("fit: lm_initial_damping must be > 0");
  if (!(length_scale_bounds.min > 0.0) || !(length_scale_bounds.min < length_scale_bounds.max)) {
    throw std::invalid_argument("fit: length-scale bounds must satisfy 0 < min < max");
  }
  if (!(initial_length_scale > 0.0) || !(growth_length_scale > 0.0)) {
    throw std::invalid_argument("fit: seed length scales must be > 0");
  }
}

FitSamples samples_from_grid(const LocalEdtGrid& edt) {
  FitSamples out;
  const GridGeometry& g = edt.geometry;
  out.positions.reserve(g.size());
  out.targets.reserve(g.size());
  for (int k = 0; k < g.dims.z(); ++k) {
    for (int j = 0; j < g.dims.y(); ++j) {
      for (int i = 0; i < g.dims.x(); ++i) {
        out.positions.push_back(g.center(i, j, k));
        out.targets.push_back(edt.at(i, j, k));
      }
    }
  }
  return out;
}

Eigen::VectorXd pack_kernels(std::span<const GaussianKernel> kernels) {
  Eigen::VectorXd p(7 * kernels.size());
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const GaussianKernel& g = kernels[k];
    p[7 * k] = g.weight;
    p.segment<3>(7 * k + 1) = g.center;
    p.segment<3>(7 * k + 4) = g.length_scales.array().log();
  }
  return p;
}

std::vector<GaussianKernel> unpack_kernels(const Eigen::VectorXd& params) {
  std::vector<GaussianKernel> out(params.size() / 7);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].weight = params[7 * k];
    out[k].center = params.segment<3>(7 * k + 1);
    out[k].length_scales = params.segment<3>(7 * k + 4).array().exp();
  }
  return out;
}

KernelFitProblem::KernelFitProblem(const FitSamples& samples, int kernel_count,
                                   LengthScaleBounds bounds)
    : samples_(samples),
      kernel_count_(kernel_count),
      log_min_(std::log(bounds.min)),
      log_max_(std::log(bounds.max)) {}

bool KernelFitProblem::evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                                Eigen::MatrixXd* jacobian, double& cost) {
  const auto n = static_cast<Eigen::Index>(samples_.positions.size());
  residuals.resize(n);
  for (Eigen::Index s = 0; s < n; ++s) residuals[s] = -samples_.targets[s];
  if (jacobian != nullptr) jacobian->setZero(n, 7 * kernel_count_);

  for (int k = 0; k < kernel_count_; ++k) {
    const double w = params[7 * k];
    const Eigen::Vector3d mu = params.segment<3>(7 * k + 1);
    const Eigen::Vector3d inv_l2 = (-2.0 * params.segment<3>(7 * k + 4)).array().exp();
    for (Eigen::Index s = 0; s < n; ++s) {
      const Eigen::Vector3d diff = samples_.positions[s] - mu;
      const Eigen::Vector3d scaled_sq = diff.cwiseProduct(diff).cwiseProduct(inv_l2);
      const double e = 0.5 * scaled_sq.sum();
      if (e > kExponentCutoff) continue;
      const double basis = std::exp(-e);
      const double g = w * basis;
      residuals[s] += g;
      if (jacobian != nullptr) {
        auto& jac = *jacobian;
        const Eigen::Index c = 7 * k;
        jac(s, c) = basis;
        jac(s, c + 1) = g * diff.x() * inv_l2.x();
        jac(s, c + 2) = g * diff.y() * inv_l2.y();
        jac(s, c + 3) = g * diff.z() * inv_l2.z();
        jac(s, c + 4) = g * scaled_sq.x();
        jac(s, c + 5) = g * scaled_sq.y();
        jac(s, c + 6) = g * scaled_sq.z();
      }
    }
  }
  cost = residuals.squaredNorm();
  return std::isfinite(cost);
}

Eigen::VectorXd KernelFitProblem::plus(const Eigen::VectorXd& params,
                                       const Eigen::VectorXd& delta) const {
  Eigen::VectorXd out = params + delta;
  for (int k = 0; k < kernel_count_; ++k) {
    for (int j = 0; j < 3; ++j) {
      double& log_l = out[7 * k + 4 + j];
      log_l = std::clamp(log_l, log_min_, log_max_);
    }
  }
  return out;
}

double mean_absolute_error(std::span<const GaussianKernel> kernels, const FitSamples& samples) {
  if (samples.positions.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t s = 0; s < samples.positions.size(); ++s) {
    sum += std::abs(eval_mixture_value(kernels, samples.positions[s]) - samples.targets[s]);
  }
  return sum / static_cast<double>(samples.positions.size());
}

namespace {

GaussianKernel make_kernel(double weight, const Eigen::Vector3d& center, double length_scale) {
  GaussianKernel k;
  k.weight = weight;
  k.center = center;
  k.length_scales = Eigen::Vector3d::Constant(length_scale);
  return k;
}

Eigen::Vector3d grid_center(const GridGeometry& g) {
  return g.origin + 0.5 * g.voxel_size * (g.dims - Eigen::Vector3i::Ones()).cast<double>();
}

// Kernels placed at the largest-|residual| samples, at least two voxels apart.
std::vector<GaussianKernel> growth_kernels(std::span<const GaussianKernel> current,
                                           const FitSamples& samples, int count, double spacing,
                                           double length_scale) {
  const std::size_t n = samples.positions.size();
  std::vector<double> residual(n);
  for (std::size_t s = 0; s < n; ++s) {
    residual[s] = samples.targets[s] - eval_mixture_value(current, samples.positions[s]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(residual[a]) > std::abs(residual[b]);
  });
  std::vector<GaussianKernel> out;
  for (std::size_t s : order) {
    if (static_cast<int>(out.size()) >= count) break;
    if (residual[s] == 0.0) break;
    const Eigen::Vector3d& x = samples.positions[s];
    const bool crowded = std::any_of(out.begin(), out.end(), [&](const GaussianKernel& k) {
      return (k.center - x).lpNorm<Eigen::Infinity>() < spacing;
    });
    if (crowded) continue;
    out.push_back(make_kernel(residual[s], x, length_scale));
  }
  return out;
}

}  // namespace

std::vector<GaussianKernel> initialize_kernels(const ExtremaSet& extrema, const LocalEdtGrid& edt,
                                               int budget, const FitConfig& cfg,
                                               std::span<const GaussianKernel> existing) {
  struct Candidate {
    GaussianKernel kernel;
    double score;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(extrema.maxima.size() + extrema.minima.size());
  for (const Extremum& m : extrema.maxima) {
    candidates.push_back({make_kernel(m.distance, m.position, cfg.initial_length_scale),
                          std::abs(m.distance - eval_mixture_value(existing, m.position))});
  }
  for (const Extremum& m : extrema.minima) {
    candidates.push_back({make_kernel(-cfg.minimum_seed_weight, m.position,
                                      cfg.initial_length_scale),
                          std::abs(m.distance - eval_mixture_value(existing, m.position))});
  }
  // Zero-distance maxima cannot occur, so weights seeded here are nonzero.
  std::vector<GaussianKernel> out;
  if (candidates.empty()) {
    double mean = 0.0;
    for (double d : edt.distances) mean += d;
    if (!edt.distances.empty()) mean /= static_cast<double>(edt.distances.size());
    // A zero seed would have zero gradient in every other parameter.
    if (mean == 0.0) mean = cfg.prune_weight;
    out.push_back(make_kernel(mean, grid_center(edt.geometry), cfg.initial_length_scale));
    return out;
  }
  if (static_cast<int>(candidates.size()) > budget) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    candidates.resize(static_cast<std::size_t>(std::max(budget, 1)));
  }
  out.reserve(candidates.size());
  for (const Candidate& c : candidates) out.push_back(c.kernel);
  return out;
}

FittedBlock fit_block(const LocalEdtGrid& edt, const ExtremaSet& extrema, const FitConfig& cfg) {
  cfg.validate();
  const FitSamples samples = samples_from_grid(edt);
  FittedBlock out;
  out.sample_count = static_cast<int>(samples.positions.size());
  if (samples.positions.empty()) return out;

  const bool touches_surface =
      *std::min_element(samples.targets.begin(), samples.targets.end()) == 0.0;
  const int budget = std::min(
      cfg.max_kernels, touches_surface ? cfg.initial_kernels_surface : cfg.initial_kernels_empty);

  std::vector<GaussianKernel> kernels = initialize_kernels(extrema, edt, budget, cfg);

  LmOptions lm;
  lm.max_iterations = cfg.max_lm_iterations;
  lm.initial_damping = cfg.lm_initial_damping;

  bool numerical_failure = false;
  double mae = 0.0;
  const double spacing = 2.0 * edt.geometry.voxel_size;
  while (true) {
    KernelFitProblem problem(samples, static_cast<int>(kernels.size()), cfg.length_scale_bounds);
    const LmResult result = lm_solve(problem, problem.plus(pack_kernels(kernels),
                                                           Eigen::VectorXd::Zero(7 * kernels.size())),
                                     lm);
    kernels = unpack_kernels(result.params);
    if (result.stop == LmStop::kDampingExhausted || result.stop == LmStop::kInvalidEvaluation) {
      numerical_failure = true;
    }
    mae = mean_absolute_error(kernels, samples);
    if (mae <= cfg.mae_tolerance) break;
    const int room = cfg.max_kernels - static_cast<int>(kernels.size());
    if (room <= 0) break;
    std::vector<GaussianKernel> extra =
        growth_kernels(kernels, samples, std::min(room, cfg.kernel_increment), spacing,
                       cfg.growth_length_scale);
    if (extra.empty()) break;
    kernels.insert(kernels.end(), extra.begin(), extra.end());
  }

  // Prune negligible kernels but keep at least one.
  if (kernels.size() > 1) {
    auto largest = std::max_element(kernels.begin(), kernels.end(),
                                    [](const GaussianKernel& a, const GaussianKernel& b) {
                                      return std::abs(a.weight) < std::abs(b.weight);
                                    });
    const GaussianKernel keep = *largest;
    std::erase_if(kernels, [&](const GaussianKernel& k) {
      return std::abs(k.weight) < cfg.prune_weight;
    });
    if (kernels.empty()) kernels.push_back(keep);
    mae = mean_absolute_error(kernels, samples);
  }

  out.kernels = std::move(kernels);
  out.mae = mae;
  out.converged = !numerical_failure && mae <= cfg.mae_tolerance;
  return out;
}

}  // namespace gedf
