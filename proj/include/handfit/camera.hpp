#pragma once

#include "handfit/types.hpp"

#include <filesystem>

namespace handfit {

enum class ProjectionMode { perspective, weak };

/// Pinhole intrinsics in pixels. Extrinsic rotation is identity.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Weak perspective: u = s * x + tx, v = s * y + ty. s is pixels per model unit.
struct WeakCamera {
  double s = 1.0;
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
};

struct CameraSpec {
  ProjectionMode mode = ProjectionMode::perspective;
  Intrinsics intrinsics;
  WeakCamera weak;

  static CameraSpec perspective(double fx, double fy, double cx, double cy);
  static CameraSpec weak_perspective(double s, const Eigen::Vector2d& t);
  /// Throws DataError unless fx, fy > 0 (perspective) or s > 0 (weak).
  void validate() const;
};

template <typename Scalar>
Vector2<Scalar> project_persp(const Intrinsics& k, const Vector3<Scalar>& p) {
  if (!(p.z() > Scalar(0))) {
    throw BehindCameraError(-1, static_cast<double>(p.z()));
  }
  return {Scalar(k.fx) * p.x() / p.z() + Scalar(k.cx), Scalar(k.fy) * p.y() / p.z() + Scalar(k.cy)};
}

/// Inverse of project_persp for a pixel (u, v) at root-relative depth d; z = d + d_root.
template <typename Scalar>
Vector3<Scalar> unproject_persp(const Intrinsics& k, const Vector3<Scalar>& uvd, Scalar d_root) {
  const Scalar z = uvd.z() + d_root;
  if (!(z > Scalar(0))) {
    throw DegenerateError("unprojection recovered a non-positive depth");
  }
  return {(uvd.x() - Scalar(k.cx)) * z / Scalar(k.fx), (uvd.y() - Scalar(k.cy)) * z / Scalar(k.fy), z};
}

/// Depth is dropped, not divided by.
template <typename Scalar>
Vector2<Scalar> project_weak(const WeakCamera& cam, const Vector3<Scalar>& p) {
  return {Scalar(cam.s) * p.x() + Scalar(cam.t.x()), Scalar(cam.s) * p.y() + Scalar(cam.t.y())};
}

/// Inverse weak projection of (u', v', d'); depth passes through unscaled.
template <typename Scalar>
Vector3<Scalar> unproject_weak(const WeakCamera& cam, const Vector3<Scalar>& uvd) {
  return {(uvd.x() - Scalar(cam.t.x())) / Scalar(cam.s), (uvd.y() - Scalar(cam.t.y())) / Scalar(cam.s),
          uvd.z()};
}

/// Projects with whichever model `cam.mode` selects.
Eigen::Vector2d project(const CameraSpec& cam, const Eigen::Vector3d& p);

inline constexpr double kBoneDepthEpsilon = 1e-6;

/// Weak scale that makes a bone with image offset `bone_uv` and normalized depth offset
/// `bone_d` unit length in 3D. Throws DegenerateError when |bone_d| >= 1 - 1e-6.
double weak_scale_from_bone(const Eigen::Vector2d& bone_uv, double bone_d);

/// Bone whose length defines the unit of scale-normalized depth.
struct ReferenceBone {
  int from = 0;  // wrist
  int to = 7;    // middle finger proximal joint
};

/// weak_scale_from_bone applied to the reference bone of 21 (u, v, d) rows.
double weak_scale_from_keypoints(const Eigen::Matrix<double, kNumKeypoints, 3>& uvd,
                                 const ReferenceBone& bone = {});

/// Least-squares weak scale for u - t = s * (x, y) with t pinned to the root pixel.
/// `joints` are root-relative. Throws DegenerateError if every joint sits at the root.
WeakCamera weak_s_t_from_keypoints(const Joints& joints, const Keypoints& keypoints,
                                   const Eigen::Vector2d& root_px);

/// Closed-form scale compensation for root-relative `joints` placed at depth z_root,
/// exact when all joints share the root depth.
double persp_scale_analytic(const Intrinsics& k, const Joints& joints, const Keypoints& keypoints,
                            const Eigen::Vector2d& root_px, double z_root);

/// {"fx": .., "fy": .., "cx": .., "cy": ..}
Intrinsics load_intrinsics(const std::filesystem::path& path);
void save_intrinsics(const Intrinsics& k, const std::filesystem::path& path);

} // namespace handfit
