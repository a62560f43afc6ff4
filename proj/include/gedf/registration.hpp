#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gedf/eskf.hpp"
#include "gedf/imu.hpp"
#include "gedf/lm_solver.hpp"
#include "gedf/pointcloud_io.hpp"
#include "gedf/pose.hpp"
#include "gedf/sparse_map.hpp"

namespace gedf {

struct RegistrationConfig {
  double coarse_cauchy_scale = 1.0;
  double fine_cauchy_scale = 0.1;
  int max_iterations = 30;  // per stage
  double function_tolerance = 1e-8;
  double step_tolerance = 1e-8;
  double min_valid_fraction = 0.2;

  /// Throws std::invalid_argument unless coarse > fine > 0 and the other
  /// fields are in range.
  void validate() const;
};

struct RegistrationResult {
  Pose6D pose;
  double final_cost = 0.0;
  std::array<int, 2> iterations{0, 0};
  std::array<std::vector<double>, 2> accepted_costs;
  double valid_fraction = 0.0;
  bool converged = false;
  double mean_abs_residual = 0.0;
};

struct RobustResidual {
  double residual = 0.0;  // sqrt(rho'(r^2)) * r
  double weight = 1.0;    // sqrt(rho'(r^2))
};

/// Cauchy loss rho(s) = c^2 log(1 + s / c^2) on a squared residual s.
double cauchy_loss(double squared_residual, double scale);

RobustResidual robust_weight(double residual, double scale);

/// Residuals d(R p_i + t) of a scan against the map under one Cauchy scale.
/// Parameters are [t (3), q (x, y, z, w)]; the tangent is [dt, dtheta] with
/// q <- q * exp(dtheta). Points outside the map give zero residual and zero
/// Jacobian rows and are re-tested at every evaluation.
class ScanToMapProblem final : public LeastSquaresProblem {
 public:
  ScanToMapProblem(const SparseGmmMap& map, std::span<const Eigen::Vector3d> points,
                   double cauchy_scale);

  int tangent_dim() const override { return 6; }
  bool evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                Eigen::MatrixXd* jacobian, double& cost) override;
  Eigen::VectorXd plus(const Eigen::VectorXd& params, const Eigen::VectorXd& delta) const override;

  /// Unweighted residuals d_i and validity mask at a pose.
  void raw_residuals(const Pose6D& pose, Eigen::VectorXd& residuals,
                     std::vector<bool>& valid) const;

  static Eigen::VectorXd to_params(const Pose6D& pose);
  static Pose6D to_pose(const Eigen::VectorXd& params);

 private:
  const SparseGmmMap& map_;
  std::span<const Eigen::Vector3d> points_;
  double scale_;
};

/// Two-stage (coarse then fine Cauchy scale) scan-to-map alignment. The result
/// is flagged not converged when the final valid fraction is below
/// min_valid_fraction or the solver fails numerically; reaching the iteration
/// cap alone does not clear the flag. Throws std::invalid_argument for an
/// empty scan.
RegistrationResult register_scan(const SparseGmmMap& map, std::span<const Eigen::Vector3d> points,
                                 const Pose6D& initial, const RegistrationConfig& cfg);

enum class SetupKind { kInertial, kNoImu, kNoise };

struct LocalizationSetup {
  SetupKind kind = SetupKind::kInertial;
  double sigma_t = 0.0;    // m, per axis
  double sigma_yaw = 0.0;  // rad

  static LocalizationSetup inertial() { return {}; }
  static LocalizationSetup no_imu() { return {SetupKind::kNoImu, 0.0, 0.0}; }
  static LocalizationSetup noise(double sigma_t, double sigma_yaw) {
    return {SetupKind::kNoise, sigma_t, sigma_yaw};
  }
  static LocalizationSetup low_noise() { return noise(0.25, 0.05); }
  static LocalizationSetup high_noise() { return noise(0.5, 0.1); }
};

struct LocalizationConfig {
  RegistrationConfig registration;
  EskfConfig eskf;
  double scan_voxel_size = 0.5;
  Eigen::Vector3d initial_velocity = Eigen::Vector3d::Zero();
  /// Diagonal standard deviations of the initial error state.
  double initial_position_sigma = 0.1;
  double initial_velocity_sigma = 1.0;
  double initial_rotation_sigma = 0.02;
  double initial_accel_bias_sigma = 0.05;
  double initial_gyro_bias_sigma = 0.005;
};

struct ScanReport {
  double stamp = 0.0;  // sweep end
  double milliseconds = 0.0;
  std::size_t points = 0;
  RegistrationResult registration;
  bool registration_failed = false;
  bool update_accepted = false;
};

struct LocalizationOutput {
  std::vector<TrajectorySample> trajectory;  // sensor pose at each sweep end
  std::vector<ScanReport> scans;
};

/// Sequential localization replay over time-ordered scans. Inertial and noise
/// setups require an IMU stream; `initial_pose` is the sensor pose at the
/// start of the first sweep.
LocalizationOutput run_localization(const SparseGmmMap& map, std::span<const Scan> scans,
                                    std::optional<std::span<const ImuSample>> imu,
                                    const LocalizationSetup& setup, const Pose6D& initial_pose,
                                    std::uint64_t seed, const LocalizationConfig& cfg = {});

struct TrajectoryError {
  double position_rmse = 0.0;  // m
  double rotation_rmse = 0.0;  // degrees
  std::size_t samples = 0;
};

/// Truth interpolated at every estimate stamp inside its span; no alignment.
/// Throws std::invalid_argument with fewer than two overlapping samples.
TrajectoryError trajectory_rmse(std::span<const TrajectorySample> estimate,
                                std::span<const TrajectorySample> truth);

}  // namespace gedf
