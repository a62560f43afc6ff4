#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gedf/imu.hpp"
#include "gedf/pointcloud_io.hpp"
#include "gedf/pose.hpp"

namespace gedf {

using Matrix15d = Eigen::Matrix<double, 15, 15>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector15d = Eigen::Matrix<double, 15, 1>;

/// Error-state ordering inside the 15-vector.
enum ErrorBlock : int { kErrP = 0, kErrV = 3, kErrTheta = 6, kErrBa = 9, kErrBg = 12 };

struct NominalState {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();  // body to world
  Eigen::Vector3d b_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b_g = Eigen::Vector3d::Zero();
  double stamp = 0.0;

  Pose6D pose() const { return Pose6D{p, q}; }
};

/// Continuous-time noise densities.
struct ImuNoise {
  double accel_noise = 2e-2;       // m/s^2/sqrt(Hz)
  double gyro_noise = 2e-3;        // rad/s/sqrt(Hz)
  double accel_bias_walk = 1e-3;   // m/s^3/sqrt(Hz)
  double gyro_bias_walk = 1e-4;    // rad/s^2/sqrt(Hz)
};

struct EskfConfig {
  ImuNoise noise;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
  /// Squared Mahalanobis gate on the 6-D pose innovation (chi-square, 6 dof, 0.999).
  double innovation_gate = 22.4577;
  double position_sigma = 0.05;
  double rotation_sigma = 0.01;
  /// LiDAR pose in the IMU body frame.
  Pose6D extrinsic;

  Matrix6d measurement_covariance() const;
};

/// Propagates the nominal state to imu.stamp and the covariance with the
/// first-order error-state transition. Throws std::invalid_argument when
/// imu.stamp does not exceed state.stamp.
void predict(NominalState& state, Matrix15d& cov, const ImuSample& imu, const ImuNoise& noise,
             const Eigen::Vector3d& gravity);

struct UpdateOutcome {
  bool accepted = false;
  double mahalanobis_sq = 0.0;
};

/// Pose update with residual [p_meas - p; log(q^-1 q_meas)] and Joseph-form
/// covariance, followed by error injection and reset. The update is skipped
/// when the squared Mahalanobis distance exceeds `gate`.
UpdateOutcome update_pose(NominalState& state, Matrix15d& cov, const Pose6D& measurement,
                          const Matrix6d& meas_cov, double gate);

/// Filter owning its state, covariance and a time-ordered state history.
class Eskf {
 public:
  Eskf(const EskfConfig& config, const NominalState& initial, const Matrix15d& initial_cov);

  void predict(const ImuSample& imu);
  UpdateOutcome update_pose(const Pose6D& measurement);
  UpdateOutcome update_pose(const Pose6D& measurement, const Matrix6d& meas_cov);

  const NominalState& state() const { return state_; }
  const Matrix15d& covariance() const { return cov_; }
  const std::vector<NominalState>& history() const { return history_; }
  const EskfConfig& config() const { return config_; }

  /// Drops history entries older than the newest entry at or before `t`.
  void trim_history(double t);

 private:
  EskfConfig config_;
  NominalState state_;
  Matrix15d cov_;
  std::vector<NominalState> history_;
};

struct InterpolatedPose {
  Pose6D pose;
  bool clamped = false;
};

/// Pose at time t interpolated between the bracketing history entries.
/// Times outside the history are clamped and flagged. Throws
/// std::invalid_argument for an empty history.
InterpolatedPose pose_at(std::span<const NominalState> history, double t);

/// Re-expresses every scan point in the sensor frame at `target_time`, using
/// history poses composed with the body-to-sensor `extrinsic`.
std::vector<Eigen::Vector3d> deskew(const Scan& scan, std::span<const NominalState> history,
                                    double target_time, const Pose6D& extrinsic = {});

}  // namespace gedf
