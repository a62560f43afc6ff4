#include "gedf/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace gedf {

void RegistrationConfig::validate() const {
  if (!(fine_cauchy_scale > 0.0) || !(coarse_cauchy_scale > fine_cauchy_scale)) {
    throw std::invalid_argument("registration: need coarse_cauchy_scale > fine_cauchy_scale > 0");
  }
  if (max_iterations < 1) throw std::invalid_argument("registration: max_iterations must be >= 1");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0)) {
    throw std::invalid_argument("registration: min_valid_fraction must be in [0, 1]");
  }
}

double cauchy_loss(double squared_residual, double scale) {
  const double c2 = scale * scale;
  return c2 * std::log1p(squared_residual / c2);
}

RobustResidual robust_weight(double residual, double scale) {
  const double c2 = scale * scale;
  const double weight = scale / std::sqrt(c2 + residual * residual);
  return {weight * residual, weight};
}

ScanToMapProblem::ScanToMapProblem(const SparseGmmMap& map,
                                   std::span<const Eigen::Vector3d> points, double cauchy_scale)
    : map_(map), points_(points), scale_(cauchy_scale) {}

Eigen::VectorXd ScanToMapProblem::to_params(const Pose6D& pose) {
  Eigen::VectorXd x(7);
  x.head<3>() = pose.translation;
  x.tail<4>() = pose.rotation.normalized().coeffs();
  return x;
}

Pose6D ScanToMapProblem::to_pose(const Eigen::VectorXd& params) {
  Pose6D pose;
  pose.translation = params.head<3>();
  pose.rotation = Eigen::Quaterniond(params[6], params[3], params[4], params[5]).normalized();
  return pose;
}

Eigen::VectorXd ScanToMapProblem::plus(const Eigen::VectorXd& params,
                                       const Eigen::VectorXd& delta) const {
  Pose6D pose = to_pose(params);
  pose.translation += delta.head<3>();
  pose.rotation = (pose.rotation * quat_exp(delta.tail<3>())).normalized();
  return to_params(pose);
}

void ScanToMapProblem::raw_residuals(const Pose6D& pose, Eigen::VectorXd& residuals,
                                     std::vector<bool>& valid) const {
  const auto n = static_cast<std::ptrdiff_t>(points_.size());
  residuals.resize(n);
  std::vector<char> ok(points_.size(), 0);
#pragma omp parallel for schedule(static) if (n > 2048)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const FieldSample s = map_.query(pose.transform(points_[i]));
    residuals[i] = s.valid ? s.value : 0.0;
    ok[i] = s.valid ? 1 : 0;
  }
  valid.assign(ok.begin(), ok.end());
}

bool ScanToMapProblem::evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                                Eigen::MatrixXd* jacobian, double& cost) {
  const Pose6D pose = to_pose(params);
  const Eigen::Matrix3d rot = pose.rotation.toRotationMatrix();
  const auto n = static_cast<std::ptrdiff_t>(points_.size());
  residuals.resize(n);
  if (jacobian != nullptr) jacobian->resize(n, 6);
  std::vector<double> losses(points_.size(), 0.0);

#pragma omp parallel for schedule(static) if (n > 2048)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Eigen::Vector3d& p = points_[i];
    const FieldSample s = map_.query(rot * p + pose.translation);
    if (!s.valid) {
      residuals[i] = 0.0;
      if (jacobian != nullptr) jacobian->row(i).setZero();
      continue;
    }
    const RobustResidual rr = robust_weight(s.value, scale_);
    residuals[i] = rr.residual;
    losses[i] = cauchy_loss(s.value * s.value, scale_);
    if (jacobian != nullptr) {
      const Eigen::RowVector3d g = s.gradient.transpose();
      jacobian->block<1, 3>(i, 0) = rr.weight * g;
      jacobian->block<1, 3>(i, 3) = -rr.weight * (g * rot * skew(p));
    }
  }
  cost = 0.0;
  for (double l : losses) cost += l;
  return std::isfinite(cost);
}

RegistrationResult register_scan(const SparseGmmMap& map, std::span<const Eigen::Vector3d> points,
                                 const Pose6D& initial, const RegistrationConfig& cfg) {
  if (points.empty()) throw std::invalid_argument("register_scan: empty scan");
  cfg.validate();

  LmOptions options;
  options.max_iterations = cfg.max_iterations;
  options.function_tolerance = cfg.function_tolerance;
  options.step_tolerance = cfg.step_tolerance;

  RegistrationResult result;
  Eigen::VectorXd params = ScanToMapProblem::to_params(initial);
  bool numerical_failure = false;
  const std::array<double, 2> scales{cfg.coarse_cauchy_scale, cfg.fine_cauchy_scale};
  for (int stage = 0; stage < 2; ++stage) {
    ScanToMapProblem problem(map, points, scales[stage]);
    LmResult lm = lm_solve(problem, params, options);
    params = lm.params;
    result.iterations[stage] = lm.iterations;
    result.accepted_costs[stage] = std::move(lm.accepted_costs);
    result.final_cost = lm.final_cost;
    if (lm.stop == LmStop::kInvalidEvaluation || lm.stop == LmStop::kDampingExhausted) {
      numerical_failure = true;
    }
  }
  result.pose = ScanToMapProblem::to_pose(params);

  ScanToMapProblem final_problem(map, points, cfg.fine_cauchy_scale);
  Eigen::VectorXd d;
  std::vector<bool> valid;
  final_problem.raw_residuals(result.pose, d, valid);
  const auto n_valid = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  result.valid_fraction = static_cast<double>(n_valid) / static_cast<double>(points.size());
  result.mean_abs_residual = n_valid > 0 ? d.cwiseAbs().sum() / static_cast<double>(n_valid) : 0.0;
  result.converged = !numerical_failure && result.valid_fraction >= cfg.min_valid_fraction;
  return result;
}

namespace {

Matrix15d initial_covariance(const LocalizationConfig& cfg) {
  Vector15d sigma;
  sigma.segment<3>(kErrP).setConstant(cfg.initial_position_sigma);
  sigma.segment<3>(kErrV).setConstant(cfg.initial_velocity_sigma);
  sigma.segment<3>(kErrTheta).setConstant(cfg.initial_rotation_sigma);
  sigma.segment<3>(kErrBa).setConstant(cfg.initial_accel_bias_sigma);
  sigma.segment<3>(kErrBg).setConstant(cfg.initial_gyro_bias_sigma);
  return sigma.cwiseAbs2().asDiagonal();
}

// Predicts through every sample up to `t`, holding the next sample's reading
// over the final partial interval so the state lands exactly on `t`.
void propagate_to(Eskf& filter, std::span<const ImuSample> imu, std::size_t& cursor, double t) {
  while (cursor < imu.size() && imu[cursor].stamp <= t) {
    if (imu[cursor].stamp > filter.state().stamp) filter.predict(imu[cursor]);
    ++cursor;
  }
  if (cursor < imu.size() && filter.state().stamp < t) {
    ImuSample held = imu[cursor];
    held.stamp = t;
    filter.predict(held);
  }
}

}  // namespace

LocalizationOutput run_localization(const SparseGmmMap& map, std::span<const Scan> scans,
                                    std::optional<std::span<const ImuSample>> imu,
                                    const LocalizationSetup& setup, const Pose6D& initial_pose,
                                    std::uint64_t seed, const LocalizationConfig& cfg) {
  cfg.registration.validate();
  for (std::size_t i = 1; i < scans.size(); ++i) {
    if (scans[i].stamp < scans[i - 1].stamp) {
      throw std::invalid_argument("run_localization: scans are not time-ordered");
    }
  }
  const bool inertial = setup.kind != SetupKind::kNoImu;
  if (inertial && !imu) {
    throw std::invalid_argument("run_localization: this setup requires an IMU stream");
  }

  LocalizationOutput out;
  if (scans.empty()) return out;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Pose6D extrinsic = cfg.eskf.extrinsic;
  const Pose6D extrinsic_inv = extrinsic.inverse();

  NominalState start;
  const Pose6D body = initial_pose * extrinsic_inv;
  start.p = body.translation;
  start.q = body.rotation;
  start.v = cfg.initial_velocity;
  start.stamp = scans.front().stamp;
  Eskf filter(cfg.eskf, start, initial_covariance(cfg));
  std::size_t cursor = 0;
  Pose6D previous = initial_pose;

  for (const Scan& scan : scans) {
    const auto t_begin = std::chrono::steady_clock::now();
    const double t_end = scan.stamp + scan.sweep_period;
    ScanReport report;
    report.stamp = t_end;

    std::vector<Eigen::Vector3d> points;
    Pose6D guess;
    if (inertial) {
      propagate_to(filter, *imu, cursor, t_end);
      points = deskew(scan, filter.history(), t_end, extrinsic);
      guess = filter.state().pose() * extrinsic;
      if (setup.kind == SetupKind::kNoise) {
        Eigen::Vector3d dt(unit(rng), unit(rng), unit(rng));
        const double dyaw = unit(rng);
        guess.translation += setup.sigma_t * dt;
        guess.rotation = (yaw_rotation(setup.sigma_yaw * dyaw) * guess.rotation).normalized();
      }
    } else {
      points = scan.points;
      guess = previous;
    }
    points = voxel_downsample(points, cfg.scan_voxel_size);
    report.points = points.size();

    Pose6D estimate = guess;
    if (points.empty()) {
      report.registration_failed = true;
    } else {
      report.registration = register_scan(map, points, guess, cfg.registration);
      report.registration_failed = !report.registration.converged;
    }

    if (inertial) {
      if (!report.registration_failed) {
        report.update_accepted = filter.update_pose(report.registration.pose * extrinsic_inv).accepted;
      }
      estimate = filter.state().pose() * extrinsic;
      filter.trim_history(t_end);
    } else if (!report.registration_failed) {
      estimate = report.registration.pose;
    }
    previous = estimate;

    report.milliseconds =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_begin).count();
    out.trajectory.push_back(TrajectorySample{t_end, estimate.translation, estimate.rotation});
    out.scans.push_back(std::move(report));
  }
  return out;
}

TrajectoryError trajectory_rmse(std::span<const TrajectorySample> estimate,
                                std::span<const TrajectorySample> truth) {
  if (truth.size() < 2) throw std::invalid_argument("trajectory_rmse: truth needs >= 2 samples");
  double sum_p = 0.0;
  double sum_r = 0.0;
  std::size_t n = 0;
  for (const TrajectorySample& e : estimate) {
    if (e.stamp < truth.front().stamp || e.stamp > truth.back().stamp) continue;
    const auto it = std::lower_bound(
        truth.begin(), truth.end(), e.stamp,
        [](const TrajectorySample& s, double value) { return s.stamp < value; });
    Pose6D reference;
    if (it->stamp == e.stamp) {
      reference = it->pose();
    } else {
      const TrajectorySample& a = *std::prev(it);
      const TrajectorySample& b = *it;
      reference = interpolate(a.pose(), b.pose(), (e.stamp - a.stamp) / (b.stamp - a.stamp));
    }
    sum_p += (e.position - reference.translation).squaredNorm();
    const double angle = rotation_angle(reference.rotation, e.orientation) * 180.0 / std::numbers::pi;
    sum_r += angle * angle;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("trajectory_rmse: fewer than 2 overlapping samples");
  return {std::sqrt(sum_p / n), std::sqrt(sum_r / n), n};
}

}  // namespace gedf
