#include "gedf/lidar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace gedf {

RayPattern RayPattern::spinning(int rings, int azimuth_steps, double min_elevation_deg,
                                double max_elevation_deg) {
  RayPattern pattern;
  if (rings <= 0 || azimuth_steps <= 0) return pattern;
  pattern.rays.reserve(static_cast<std::size_t>(rings) * azimuth_steps);
  const double deg = std::numbers::pi / 180.0;
  for (int a = 0; a < azimuth_steps; ++a) {
    const double azimuth = 2.0 * std::numbers::pi * a / azimuth_steps;
    const double rel = static_cast<double>(a) / azimuth_steps;
    for (int r = 0; r < rings; ++r) {
      const double s = rings == 1 ? 0.5 : static_cast<double>(r) / (rings - 1);
      const double elevation = (min_elevation_deg + s * (max_elevation_deg - min_elevation_deg)) * deg;
      pattern.rays.push_back(Ray{{std::cos(elevation) * std::cos(azimuth),
                                  std::cos(elevation) * std::sin(azimuth), std::sin(elevation)},
                                 rel});
    }
  }
  return pattern;
}

Scan simulate_scan(const Scene& scene, const PoseFn& pose_fn, double stamp, double sweep_period,
                   const RayPattern& pattern, bool distort, const ScanNoise& noise,
                   double max_range) {
  std::vector<Ray> rays = pattern.rays;
  std::stable_sort(rays.begin(), rays.end(),
                   [](const Ray& a, const Ray& b) { return a.rel_time < b.rel_time; });

  std::vector<double> range_noise(rays.size(), 0.0);
  if (noise.range_sigma > 0.0) {
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> g(0.0, noise.range_sigma);
    for (double& n : range_noise) n = g(rng);
  }

  const Pose6D fixed = pose_fn(stamp);
  std::vector<std::optional<double>> ranges(rays.size());
  const auto n = static_cast<std::ptrdiff_t>(rays.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Ray& ray = rays[i];
    const Pose6D pose = distort ? pose_fn(stamp + ray.rel_time * sweep_period) : fixed;
    ranges[i] = scene.raycast(pose.translation, pose.rotation * ray.direction, max_range);
  }

  Scan scan;
  scan.stamp = stamp;
  scan.sweep_period = sweep_period;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!ranges[i]) continue;
    scan.points.push_back((*ranges[i] + range_noise[i]) * rays[i].direction);
    scan.rel_times.push_back(rays[i].rel_time);
  }
  return scan;
}

KinematicState LoopTrajectory::at(double t) const {
  const double w = 2.0 * std::numbers::pi / period;
  const double c1 = std::cos(w * t), s1 = std::sin(w * t);
  const double c2 = std::cos(2.0 * w * t), s2 = std::sin(2.0 * w * t);
  const double c3 = std::cos(3.0 * w * t), s3 = std::sin(3.0 * w * t);

  KinematicState k;
  k.pose.translation = center + Eigen::Vector3d(radius * c1, radius * s1, height_amplitude * s2);
  k.velocity = Eigen::Vector3d(-radius * w * s1, radius * w * c1, 2.0 * height_amplitude * w * c2);
  k.acceleration =
      Eigen::Vector3d(-radius * w * w * c1, -radius * w * w * s1, -4.0 * height_amplitude * w * w * s2);

  const double yaw = yaw_offset + yaw_amplitude * s1;
  const double pitch = pitch_amplitude * s2;
  const double roll = roll_amplitude * s3;
  const double yaw_dot = yaw_amplitude * w * c1;
  const double pitch_dot = 2.0 * pitch_amplitude * w * c2;
  const double roll_dot = 3.0 * roll_amplitude * w * c3;

  k.pose.rotation = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                     Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                     Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                        .normalized();
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  const double sr = std::sin(roll), cr = std::cos(roll);
  k.body_rate = Eigen::Vector3d(roll_dot - yaw_dot * sp, pitch_dot * cr + yaw_dot * cp * sr,
                                -pitch_dot * sr + yaw_dot * cp * cr);
  return k;
}

std::vector<ImuSample> simulate_imu(const LoopTrajectory& trajectory, double t0, double t1,
                                    double rate, const Eigen::Vector3d& gravity) {
  std::vector<ImuSample> out;
  const auto steps = static_cast<long>(std::floor((t1 - t0) * rate + 1e-9));
  out.reserve(static_cast<std::size_t>(std::max(steps, 0L)));
  for (long k = 1; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) / rate;
    const KinematicState s = trajectory.at(t);
    out.push_back(ImuSample{t, s.pose.rotation.conjugate() * (s.acceleration - gravity), s.body_rate});
  }
  return out;
}

SyntheticSequence simulate_sequence(const Scene& scene, const LoopTrajectory& trajectory,
                                    const SequenceOptions& options) {
  SyntheticSequence seq;
  const double t_end = options.t0 + options.scan_count * options.sweep_period;
  seq.imu = simulate_imu(trajectory, options.t0, t_end, options.imu_rate, options.gravity);

  const KinematicState start = trajectory.at(options.t0);
  seq.truth.push_back(TrajectorySample{options.t0, start.pose.translation, start.pose.rotation});
  for (const ImuSample& s : seq.imu) {
    const Pose6D p = trajectory.pose(s.stamp);
    seq.truth.push_back(TrajectorySample{s.stamp, p.translation, p.rotation});
  }

  const PoseFn pose_fn = [&trajectory](double t) { return trajectory.pose(t); };
  seq.scans.reserve(options.scan_count);
  for (int i = 0; i < options.scan_count; ++i) {
    const double stamp = options.t0 + i * options.sweep_period;
    ScanNoise noise = options.noise;
    noise.seed = options.noise.seed + static_cast<std::uint64_t>(i);
    seq.scans.push_back(simulate_scan(scene, pose_fn, stamp, options.sweep_period, options.pattern,
                                      options.distort, noise));
  }
  return seq;
}

}  // namespace gedf
