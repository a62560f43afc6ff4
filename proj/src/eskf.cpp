#include "gedf/eskf.hpp"

#include <algorithm>
#include <stdexcept>

namespace gedf {

namespace {

void symmetrize(Matrix15d& cov) { cov = 0.5 * (cov + cov.transpose()).eval(); }

}  // namespace

Matrix6d EskfConfig::measurement_covariance() const {
  Matrix6d r = Matrix6d::Zero();
  r.topLeftCorner<3, 3>().diagonal().setConstant(position_sigma * position_sigma);
  r.bottomRightCorner<3, 3>().diagonal().setConstant(rotation_sigma * rotation_sigma);
  return r;
}

void predict(NominalState& state, Matrix15d& cov, const ImuSample& imu, const ImuNoise& noise,
             const Eigen::Vector3d& gravity) {
  if (!(imu.stamp > state.stamp)) {
    throw std::invalid_argument("IMU stamp does not advance the filter state");
  }
  const double dt = imu.stamp - state.stamp;
  const Eigen::Vector3d accel = imu.accel - state.b_a;
  const Eigen::Vector3d omega = imu.gyro - state.b_g;
  const Eigen::Matrix3d rot = state.q.toRotationMatrix();
  const Eigen::Vector3d world_accel = rot * accel + gravity;

  Matrix15d f = Matrix15d::Identity();
  f.block<3, 3>(kErrP, kErrV) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(kErrV, kErrTheta) = -rot * skew(accel) * dt;
  f.block<3, 3>(kErrV, kErrBa) = -rot * dt;
  f.block<3, 3>(kErrTheta, kErrTheta) = quat_exp(omega * dt).toRotationMatrix().transpose();
  f.block<3, 3>(kErrTheta, kErrBg) = -Eigen::Matrix3d::Identity() * dt;

  Vector15d q_diag = Vector15d::Zero();
  q_diag.segment<3>(kErrV).setConstant(noise.accel_noise * noise.accel_noise * dt);
  q_diag.segment<3>(kErrTheta).setConstant(noise.gyro_noise * noise.gyro_noise * dt);
  q_diag.segment<3>(kErrBa).setConstant(noise.accel_bias_walk * noise.accel_bias_walk * dt);
  q_diag.segment<3>(kErrBg).setConstant(noise.gyro_bias_walk * noise.gyro_bias_walk * dt);

  state.p += state.v * dt + 0.5 * world_accel * dt * dt;
  state.v += world_accel * dt;
  state.q = (state.q * quat_exp(omega * dt)).normalized();
  state.stamp = imu.stamp;

  cov = (f * cov * f.transpose()).eval();
  cov.diagonal() += q_diag;
  symmetrize(cov);
}

UpdateOutcome update_pose(NominalState& state, Matrix15d& cov, const Pose6D& measurement,
                          const Matrix6d& meas_cov, double gate) {
  Eigen::Matrix<double, 6, 15> h = Eigen::Matrix<double, 6, 15>::Zero();
  h.block<3, 3>(0, kErrP).setIdentity();
  h.block<3, 3>(3, kErrTheta).setIdentity();

  Eigen::Matrix<double, 6, 1> residual;
  residual.head<3>() = measurement.translation - state.p;
  residual.tail<3>() = quat_log(state.q.conjugate() * measurement.rotation);

  const Matrix6d s = h * cov * h.transpose() + meas_cov;
  const Eigen::LDLT<Matrix6d> s_ldlt(s);
  UpdateOutcome outcome;
  outcome.mahalanobis_sq = residual.dot(s_ldlt.solve(residual));
  if (s_ldlt.info() != Eigen::Success || !std::isfinite(outcome.mahalanobis_sq) ||
      outcome.mahalanobis_sq > gate) {
    return outcome;
  }

  const Eigen::Matrix<double, 15, 6> gain = s_ldlt.solve(h * cov).transpose();
  const Vector15d dx = gain * residual;
  const Matrix15d ikh = Matrix15d::Identity() - gain * h;
  cov = (ikh * cov * ikh.transpose() + gain * meas_cov * gain.transpose()).eval();

  const Eigen::Vector3d dtheta = dx.segment<3>(kErrTheta);
  state.p += dx.segment<3>(kErrP);
  state.v += dx.segment<3>(kErrV);
  state.q = (state.q * quat_exp(dtheta)).normalized();
  state.b_a += dx.segment<3>(kErrBa);
  state.b_g += dx.segment<3>(kErrBg);

  Matrix15d g = Matrix15d::Identity();
  g.block<3, 3>(kErrTheta, kErrTheta) -= 0.5 * skew(dtheta);
  cov = (g * cov * g.transpose()).eval();
  symmetrize(cov);
  outcome.accepted = true;
  return outcome;
}

Eskf::Eskf(const EskfConfig& config, const NominalState& initial, const Matrix15d& initial_cov)
    : config_(config), state_(initial), cov_(initial_cov) {
  state_.q.normalize();
  symmetrize(cov_);
  history_.push_back(state_);
}

void Eskf::predict(const ImuSample& imu) {
  gedf::predict(state_, cov_, imu, config_.noise, config_.gravity);
  history_.push_back(state_);
}

UpdateOutcome Eskf::update_pose(const Pose6D& measurement) {
  return update_pose(measurement, config_.measurement_covariance());
}

UpdateOutcome Eskf::update_pose(const Pose6D& measurement, const Matrix6d& meas_cov) {
  const UpdateOutcome outcome =
      gedf::update_pose(state_, cov_, measurement, meas_cov, config_.innovation_gate);
  if (outcome.accepted) {
    if (!history_.empty() && history_.back().stamp == state_.stamp) {
      history_.back() = state_;
    } else {
      history_.push_back(state_);
    }
  }
  return outcome;
}

void Eskf::trim_history(double t) {
  auto it = std::upper_bound(history_.begin(), history_.end(), t,
                             [](double value, const NominalState& s) { return value < s.stamp; });
  if (it == history_.begin()) return;
  history_.erase(history_.begin(), std::prev(it));
}

InterpolatedPose pose_at(std::span<const NominalState> history, double t) {
  if (history.empty()) throw std::invalid_argument("pose_at: empty state history");
  InterpolatedPose out;
  if (t <= history.front().stamp) {
    out.pose = history.front().pose();
    out.clamped = t < history.front().stamp;
    return out;
  }
  if (t >= history.back().stamp) {
    out.pose = history.back().pose();
    out.clamped = t > history.back().stamp;
    return out;
  }
  const auto it = std::upper_bound(history.begin(), history.end(), t,
                                   [](double value, const NominalState& s) { return value < s.stamp; });
  const NominalState& b = *it;
  const NominalState& a = *std::prev(it);
  if (t == a.stamp) {
    out.pose = a.pose();
    return out;
  }
  const double s = (t - a.stamp) / (b.stamp - a.stamp);
  out.pose = interpolate(a.pose(), b.pose(), s);
  return out;
}

std::vector<Eigen::Vector3d> deskew(const Scan& scan, std::span<const NominalState> history,
                                    double target_time, const Pose6D& extrinsic) {
  const Pose6D target_inv = (pose_at(history, target_time).pose * extrinsic).inverse();
  std::vector<Eigen::Vector3d> out(scan.points.size());
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const double t = scan.stamp + scan.rel_times[i] * scan.sweep_period;
    const Pose6D emission = pose_at(history, t).pose * extrinsic;
    out[i] = target_inv.transform(emission.transform(scan.points[i]));
  }
  return out;
}

}  // namespace gedf
