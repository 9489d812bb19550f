#include "handfit/quaternion.hpp"

#include <cmath>

namespace handfit {

Eigen::Vector4d rotation_gradient_to_wxyz(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix3d dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return {g.cwiseProduct(dw).sum(), g.cwiseProduct(dx).sum(), g.cwiseProduct(dy).sum(),
          g.cwiseProduct(dz).sum()};
}

Eigen::Vector4d normalization_gradient(const Eigen::Vector4d& q, const Eigen::Vector4d& grad_unit) {
  const double norm = q.norm();
  const Eigen::Vector4d n = q / norm;
  return (grad_unit - n * n.dot(grad_unit)) / norm;
}

Eigen::Quaterniond quaternion_from_axis_angle(const Eigen::Vector3d& aa) {
  const double angle = aa.norm();
  if (angle < 1e-300) {
    return Eigen::Quaterniond::Identity();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, aa / angle));
}

Eigen::Vector3d axis_angle_from_quaternion(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond c = q.normalized();
  if (c.w() < 0) {
    c.coeffs() = -c.coeffs();
  }
  const double sin_half = c.vec().norm();
  if (sin_half < 1e-300) {
    return Eigen::Vector3d::Zero();
  }
  const double angle = 2 * std::atan2(sin_half, c.w());
  return c.vec() / sin_half * angle;
}

} // namespace handfit
