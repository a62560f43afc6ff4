#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gedf/pose.hpp"

namespace gedf {

/// One LiDAR sweep. Points are in the sensor frame of their emission pose;
/// rel_times are fractions of sweep_period after stamp.
struct Scan {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> rel_times;
  double stamp = 0.0;
  double sweep_period = 0.1;
};

struct TrajectorySample {
  double stamp = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose6D pose() const { return Pose6D{position, orientation}; }
};

/// Centroid of every occupied voxel, ordered by ascending packed voxel key.
std::vector<Eigen::Vector3d> voxel_downsample(std::span<const Eigen::Vector3d> points,
                                              double resolution);

/// ASCII PLY (vertex x y z as the first three properties) or whitespace xyz.
/// Format is chosen by a ".ply" extension or a leading "ply" line.
std::vector<Eigen::Vector3d> load_cloud(const std::string& path);
void save_cloud_xyz(const std::string& path, std::span<const Eigen::Vector3d> points);

/// TUM lines `stamp x y z qx qy qz qw`. Quaternions whose norm differs from
/// one by more than 1e-3 are rejected; accepted ones are renormalized.
std::vector<TrajectorySample> load_trajectory(const std::string& path);
std::vector<TrajectorySample> parse_trajectory(const std::string& text);
void save_trajectory(const std::string& path, std::span<const TrajectorySample> trajectory);
std::string format_trajectory(std::span<const TrajectorySample> trajectory);

/// Scan sequence text: per scan a header `scan <stamp> <period> <count>`
/// followed by `count` lines `x y z rel_time`.
std::vector<Scan> load_scans(const std::string& path);
void save_scans(const std::string& path, std::span<const Scan> scans);

}  // namespace gedf
