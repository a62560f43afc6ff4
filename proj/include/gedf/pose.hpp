#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gedf {

/// Rigid transform mapping sensor-frame points into the world: R(q) p + t.
struct Pose6D {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  Eigen::Vector3d transform(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Pose6D inverse() const;
  Pose6D operator*(const Pose6D& other) const;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Unit quaternion of the rotation vector `theta`.
Eigen::Quaterniond quat_exp(const Eigen::Vector3d& theta);

/// Rotation vector of a unit quaternion, angle in [0, pi].
Eigen::Vector3d quat_log(const Eigen::Quaterniond& q);

/// Geodesic angle between two rotations, radians.
double rotation_angle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Linear translation and spherical-linear rotation interpolation, s in [0, 1].
Pose6D interpolate(const Pose6D& a, const Pose6D& b, double s);

/// Rotation about +z by `yaw` radians.
Eigen::Quaterniond yaw_rotation(double yaw);

double yaw_of(const Eigen::Quaterniond& q);

}  // namespace gedf
