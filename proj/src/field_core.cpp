#include "gedf/field_core.hpp"

#include <algorithm>
#include <cmath>

namespace gedf {

bool GaussianKernel::is_valid() const {
  return std::isfinite(weight) && weight != 0.0 && center.allFinite() &&
         length_scales.allFinite() && (length_scales.array() > 0.0).all();
}

double eval_kernel(const GaussianKernel& k, const Eigen::Vector3d& x) {
  const double e = kernel_exponent(k, x);
  if (e > kExponentCutoff) return 0.0;
  return k.weight * std::exp(-e);
}

Eigen::Vector3d eval_kernel_gradient(const GaussianKernel& k, const Eigen::Vector3d& x) {
  const double e = kernel_exponent(k, x);
  if (e > kExponentCutoff) return Eigen::Vector3d::Zero();
  const double g = k.weight * std::exp(-e);
  const Eigen::Vector3d inv_l2 = k.length_scales.cwiseProduct(k.length_scales).cwiseInverse();
  return -g * (x - k.center).cwiseProduct(inv_l2);
}

MixtureValue eval_mixture(std::span<const GaussianKernel> kernels, const Eigen::Vector3d& x) {
  MixtureValue out;
  for (const GaussianKernel& k : kernels) {
    const Eigen::Vector3d diff = x - k.center;
    const Eigen::Vector3d inv_l2 = k.length_scales.cwiseProduct(k.length_scales).cwiseInverse();
    const double e = 0.5 * diff.cwiseProduct(diff).dot(inv_l2);
    if (e > kExponentCutoff) continue;
    const double g = k.weight * std::exp(-e);
    out.value += g;
    out.gradient -= g * diff.cwiseProduct(inv_l2);
  }
  return out;
}

double eval_mixture_value(std::span<const GaussianKernel> kernels, const Eigen::Vector3d& x) {
  double value = 0.0;
  for (const GaussianKernel& k : kernels) {
    const double e = kernel_exponent(k, x);
    if (e > kExponentCutoff) continue;
    value += k.weight * std::exp(-e);
  }
  return value;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double smoothstep_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 6.0 * t * (1.0 - t);
}

}  // namespace gedf
