#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gedf {

/// Body-frame specific force and angular rate.
struct ImuSample {
  double stamp = 0.0;
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
};

/// Text lines `stamp ax ay az gx gy gz`; stamps must be strictly increasing.
std::vector<ImuSample> load_imu(const std::string& path);
std::vector<ImuSample> parse_imu(const std::string& text);
void save_imu(const std::string& path, std::span<const ImuSample> samples);

}  // namespace gedf
