#pragma once

#include <span>

#include <Eigen/Core>

namespace gedf {

/// One axis-aligned anisotropic Gaussian: w * exp(-1/2 * sum_j (x_j - mu_j)^2 / l_j^2).
struct GaussianKernel {
  double weight = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d length_scales = Eigen::Vector3d::Ones();

  bool is_valid() const;
};

/// Distance and gradient of the field at one point. When `valid` is false the
/// value and gradient are exactly zero.
struct FieldSample {
  double value = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
  bool valid = false;
};

// Exponent arguments below -kExponentCutoff contribute nothing.
inline constexpr double kExponentCutoff = 20.0;

/// Half of the Mahalanobis-style squared distance, i.e. the negated exponent.
inline double kernel_exponent(const GaussianKernel& k, const Eigen::Vector3d& x) {
  const Eigen::Vector3d z = (x - k.center).cwiseQuotient(k.length_scales);
  return 0.5 * z.squaredNorm();
}

double eval_kernel(const GaussianKernel& k, const Eigen::Vector3d& x);

Eigen::Vector3d eval_kernel_gradient(const GaussianKernel& k, const Eigen::Vector3d& x);

struct MixtureValue {
  double value = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
};

/// Value and gradient of a kernel sum in one pass over the kernels.
MixtureValue eval_mixture(std::span<const GaussianKernel> kernels, const Eigen::Vector3d& x);

/// Value only; skips the gradient arithmetic.
double eval_mixture_value(std::span<const GaussianKernel> kernels, const Eigen::Vector3d& x);

/// Cubic Hermite ramp 3t^2 - 2t^3. The argument is clamped to [0, 1].
double smoothstep(double t);

/// d/dt of smoothstep, 6t(1 - t), zero outside [0, 1].
double smoothstep_derivative(double t);

}  // namespace gedf
