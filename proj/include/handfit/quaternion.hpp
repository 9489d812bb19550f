#pragma once

#include "handfit/types.hpp"

#include <Eigen/Geometry>

namespace handfit {

/// Rotation matrix of a unit quaternion given as (w, x, y, z).
template <typename Scalar>
Matrix3<Scalar> rotation_from_wxyz(const Eigen::Matrix<Scalar, 4, 1>& q) {
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Matrix3<Scalar> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Pulls a gradient with respect to the rotation matrix back onto (w, x, y, z),
/// treating the matrix entries as the polynomial map above.
Eigen::Vector4d rotation_gradient_to_wxyz(const Eigen::Vector4d& q, const Eigen::Matrix3d& grad_r);

/// Pulls a gradient through q -> q / |q|.
Eigen::Vector4d normalization_gradient(const Eigen::Vector4d& q, const Eigen::Vector4d& grad_unit);

inline Eigen::Vector4d to_wxyz(const Eigen::Quaterniond& q) {
  return {q.w(), q.x(), q.y(), q.z()};
}

inline Eigen::Quaterniond from_wxyz(const Eigen::Vector4d& v) {
  return Eigen::Quaterniond(v(0), v(1), v(2), v(3));
}

/// Axis-angle vector (axis * angle) to unit quaternion.
Eigen::Quaterniond quaternion_from_axis_angle(const Eigen::Vector3d& aa);
/// Unit quaternion to axis-angle vector; angle in [0, pi].
Eigen::Vector3d axis_angle_from_quaternion(const Eigen::Quaterniond& q);

} // namespace handfit
