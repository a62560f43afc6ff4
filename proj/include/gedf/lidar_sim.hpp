#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "gedf/imu.hpp"
#include "gedf/pointcloud_io.hpp"
#include "gedf/pose.hpp"
#include "gedf/scene.hpp"

namespace gedf {

struct Ray {
  Eigen::Vector3d direction;  // unit, sensor frame
  double rel_time = 0.0;      // fraction of the sweep period
};

struct RayPattern {
  std::vector<Ray> rays;

  /// Spinning sensor: azimuth-major order, rel_time = azimuth step / steps.
  static RayPattern spinning(int rings = 16, int azimuth_steps = 900,
                             double min_elevation_deg = -15.0, double max_elevation_deg = 15.0);
};

using PoseFn = std::function<Pose6D(double)>;

struct ScanNoise {
  double range_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Ray-casts every pattern ray from its emission pose (stamp + rel_time *
/// sweep_period when distort is set, stamp otherwise). Misses are dropped and
/// points are returned in the emission sensor frame, ordered by rel_time.
Scan simulate_scan(const Scene& scene, const PoseFn& pose_fn, double stamp, double sweep_period,
                   const RayPattern& pattern, bool distort, const ScanNoise& noise = {},
                   double max_range = 60.0);

struct KinematicState {
  Pose6D pose;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
  Eigen::Vector3d body_rate = Eigen::Vector3d::Zero();
};

/// Smooth closed loop: a horizontal circle with a gentle height wave and
/// small sinusoidal yaw, pitch and roll oscillations (Z-Y-X Euler angles).
struct LoopTrajectory {
  Eigen::Vector3d center{0.0, 0.0, 1.2};
  double radius = 2.0;
  double period = 20.0;
  double height_amplitude = 0.1;
  double yaw_offset = 0.0;
  double yaw_amplitude = 0.4;
  double pitch_amplitude = 0.03;
  double roll_amplitude = 0.03;

  KinematicState at(double t) const;
  Pose6D pose(double t) const { return at(t).pose; }
};

/// Ideal IMU readings (specific force and body rate) sampled at `rate` Hz on
/// the half-open grid starting at t0 + 1/rate and ending at or before t1.
std::vector<ImuSample> simulate_imu(const LoopTrajectory& trajectory, double t0, double t1,
                                    double rate, const Eigen::Vector3d& gravity);

struct SyntheticSequence {
  std::vector<Scan> scans;
  std::vector<ImuSample> imu;
  std::vector<TrajectorySample> truth;  // sampled at the IMU rate, including t0
};

struct SequenceOptions {
  int scan_count = 200;
  double t0 = 0.0;
  double sweep_period = 0.1;
  double imu_rate = 200.0;
  bool distort = true;
  RayPattern pattern = RayPattern::spinning(16, 360, -40.0, 40.0);
  ScanNoise noise;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
};

SyntheticSequence simulate_sequence(const Scene& scene, const LoopTrajectory& trajectory,
                                    const SequenceOptions& options);

}  // namespace gedf
