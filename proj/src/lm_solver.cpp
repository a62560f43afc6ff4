#include "gedf/lm_solver.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace gedf {

LmResult lm_solve(LeastSquaresProblem& problem, const Eigen::VectorXd& initial_params,
                  const LmOptions& options) {
  LmResult result;
  result.params = initial_params;

  const int n = problem.tangent_dim();
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double cost = 0.0;
  if (!problem.evaluate(result.params, r, &jac, cost) || !std::isfinite(cost)) {
    result.stop = LmStop::kInvalidEvaluation;
    return result;
  }
  result.initial_cost = cost;
  result.final_cost = cost;
  if (cost == 0.0) {
    result.converged = true;
    result.stop = LmStop::kZeroCost;
    return result;
  }

  Eigen::MatrixXd hessian(n, n);
  Eigen::VectorXd gradient(n);
  auto linearize = [&] {
    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
    hessian.triangularView<Eigen::StrictlyUpper>() = hessian.transpose();
    gradient.noalias() = jac.transpose() * r;
  };
  linearize();

  double damping = options.initial_damping;
  Eigen::VectorXd r_new;
  Eigen::MatrixXd jac_new;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;

  while (result.iterations < options.max_iterations) {
    if (gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      result.converged = true;
      result.stop = LmStop::kGradientTolerance;
      return result;
    }
    ++result.iterations;

    Eigen::MatrixXd augmented = hessian;
    for (int i = 0; i < n; ++i) {
      augmented(i, i) += damping * std::max(hessian(i, i), 1e-12);
    }
    ldlt.compute(augmented);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success) step = ldlt.solve(-gradient);
    if (step.size() != n || !step.allFinite()) {
      damping *= options.damping_grow;
      if (damping > options.max_damping) {
        result.stop = LmStop::kDampingExhausted;
        return result;
      }
      continue;
    }

    if (options.step_tolerance > 0.0 &&
        step.norm() < options.step_tolerance * (result.params.norm() + options.step_tolerance)) {
      result.converged = true;
      result.stop = LmStop::kStepTolerance;
      return result;
    }

    // Decrease predicted by the Gauss-Newton model of the objective.
    const double predicted = -(2.0 * gradient.dot(step) + step.dot(hessian * step));

    const Eigen::VectorXd candidate = problem.plus(result.params, step);
    double new_cost = 0.0;
    const bool ok = problem.evaluate(candidate, r_new, &jac_new, new_cost) &&
                    std::isfinite(new_cost);
    if (ok && new_cost < cost) {
      const double relative = (cost - new_cost) / cost;
      result.params = candidate;
      cost = new_cost;
      r.swap(r_new);
      jac.swap(jac_new);
      ++result.accepted_steps;
      result.accepted_costs.push_back(cost);
      result.final_cost = cost;
      damping = std::max(damping * options.damping_shrink, 1e-15);
      if (cost == 0.0) {
        result.converged = true;
        result.stop = LmStop::kZeroCost;
        return result;
      }
      if (relative < options.function_tolerance) {
        result.converged = true;
        result.stop = LmStop::kFunctionTolerance;
        return result;
      }
      linearize();
    } else {
      // Rejected only by round-off: the objective is flat at this point.
      if (ok && predicted >= 0.0 && new_cost - cost <= options.function_tolerance * cost) {
        result.converged = true;
        result.stop = LmStop::kFunctionTolerance;
        return result;
      }
      damping *= options.damping_grow;
      if (damping > options.max_damping) {
        result.stop = LmStop::kDampingExhausted;
        return result;
      }
    }
  }
  result.stop = LmStop::kMaxIterations;
  return result;
}

namespace {

class CallableProblem final : public LeastSquaresProblem {
 public:
  CallableProblem(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn, int dim)
      : residual_fn_(residual_fn), jacobian_fn_(jacobian_fn), dim_(dim) {}

  int tangent_dim() const override { return dim_; }

  bool evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                Eigen::MatrixXd* jacobian, double& cost) override {
    residuals = residual_fn_(params);
    if (jacobian != nullptr) *jacobian = jacobian_fn_(params);
    cost = residuals.squaredNorm();
    return residuals.allFinite();
  }

 private:
  const ResidualFn& residual_fn_;
  const JacobianFn& jacobian_fn_;
  int dim_;
};

}  // namespace

LmResult lm_solve(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn,
                  const Eigen::VectorXd& initial_params, const LmOptions& options) {
  CallableProblem problem(residual_fn, jacobian_fn, static_cast<int>(initial_params.size()));
  return lm_solve(problem, initial_params, options);
}

}  // namespace gedf
