#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace handfit {

/// Skeleton joints carrying a rotation (wrist + 3 per finger).
inline constexpr int kNumJoints = 16;
/// Skeleton joints plus the five fingertips.
inline constexpr int kNumKeypoints = 21;
inline constexpr int kNumShape = 10;
inline constexpr int kNumTips = 5;
inline constexpr int kNumFingers = 5;
/// Flat optimization vector: 16 quaternions (w, x, y, z) followed by 10 shape coefficients.
inline constexpr int kNumParams = kNumJoints * 4 + kNumShape;

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// One row per vertex.
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;
/// 21 joints, one row each, in the canonical order (see joint_names()).
using Joints = Eigen::Matrix<double, kNumKeypoints, 3>;
using SkeletonJoints = Eigen::Matrix<double, kNumJoints, 3>;
using Keypoints = Eigen::Matrix<double, kNumKeypoints, 2>;
using ShapeVector = Eigen::Matrix<double, kNumShape, 1>;
using ParamVector = Eigen::Matrix<double, kNumParams, 1>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad parameters, schema violations, unreadable files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerically degenerate configuration (zero denominators, rank deficiency).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// A point reached the camera plane or passed behind it. joint() is -1 for a lone point.
class BehindCameraError : public DegenerateError {
 public:
  BehindCameraError(int joint, double depth)
      : DegenerateError((joint < 0 ? std::string("point") : "joint " + std::to_string(joint)) +
                        " is behind the camera (z = " + std::to_string(depth) + ")"),
        joint_(joint) {}
  int joint() const { return joint_; }

 private:
  int joint_;
};

} // namespace handfit
