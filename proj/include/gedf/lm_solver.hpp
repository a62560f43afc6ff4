#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace gedf {

struct LmOptions {
  int max_iterations = 100;
  double initial_damping = 1e-3;
  double damping_shrink = 0.5;
  double damping_grow = 4.0;
  double max_damping = 1e16;
  double function_tolerance = 1e-8;  // relative cost change
  double gradient_tolerance = 1e-10;  // max-norm of J^T r
  double step_tolerance = 0.0;  // relative step norm; 0 disables
};

enum class LmStop {
  kZeroCost,
  kFunctionTolerance,
  kGradientTolerance,
  kStepTolerance,
  kMaxIterations,
  kDampingExhausted,
  kInvalidEvaluation,
};

struct LmResult {
  Eigen::VectorXd params;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  bool converged = false;
  LmStop stop = LmStop::kMaxIterations;
  std::vector<double> accepted_costs;
};

/// A nonlinear least-squares problem over a (possibly manifold) parameter
/// vector. Evaluation fills residuals r (and the Jacobian dr/d(delta) when
/// requested) and returns the objective. For plain problems the objective is
/// ||r||^2; robustified problems return sum rho(r_i^2) and hand back
/// IRLS-rescaled residuals and Jacobian rows whose normal equations match the
/// gradient of that objective.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;

  virtual int tangent_dim() const = 0;

  /// Returns false when the parameters cannot be evaluated.
  virtual bool evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                        Eigen::MatrixXd* jacobian, double& cost) = 0;

  virtual Eigen::VectorXd plus(const Eigen::VectorXd& params, const Eigen::VectorXd& delta) const {
    return params + delta;
  }
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Damping is multiplied
/// by `damping_shrink` after an accepted step and by `damping_grow` after a
/// rejected one.
LmResult lm_solve(LeastSquaresProblem& problem, const Eigen::VectorXd& initial_params,
                  const LmOptions& options);

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// Convenience overload for Euclidean problems given as two callables.
LmResult lm_solve(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn,
                  const Eigen::VectorXd& initial_params, const LmOptions& options);

}  // namespace gedf
