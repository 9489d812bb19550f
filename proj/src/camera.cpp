#include "handfit/camera.hpp"
#include "handfit/model_io.hpp"

#include <cmath>

namespace handfit {

CameraSpec CameraSpec::perspective(double fx, double fy, double cx, double cy) {
  CameraSpec cam;
  cam.mode = ProjectionMode::perspective;
  cam.intrinsics = {fx, fy, cx, cy};
  return cam;
}

CameraSpec CameraSpec::weak_perspective(double s, const Eigen::Vector2d& t) {
  CameraSpec cam;
  cam.mode = ProjectionMode::weak;
  cam.weak = {s, t};
  return cam;
}

void CameraSpec::validate() const {
  if (mode == ProjectionMode::perspective) {
    if (!(intrinsics.fx > 0) || !(intrinsics.fy > 0) || !std::isfinite(intrinsics.cx) ||
        !std::isfinite(intrinsics.cy)) {
      throw DataError("perspective camera needs fx, fy > 0 and a finite principal point");
    }
  } else if (!(weak.s > 0) || !weak.t.allFinite()) {
    throw DataError("weak camera needs s > 0 and a finite translation");
  }
}

Eigen::Vector2d project(const CameraSpec& cam, const Eigen::Vector3d& p) {
  return cam.mode == ProjectionMode::perspective ? project_persp<double>(cam.intrinsics, p)
                                                 : project_weak<double>(cam.weak, p);
}

double weak_scale_from_bone(const Eigen::Vector2d& bone_uv, double bone_d) {
  if (!(std::abs(bone_d) < 1.0 - kBoneDepthEpsilon)) {
    throw DegenerateError("reference bone is nearly parallel to the optical axis");
  }
  return std::sqrt(bone_uv.squaredNorm() / (1.0 - bone_d * bone_d));
}

double weak_scale_from_keypoints(const Eigen::Matrix<double, kNumKeypoints, 3>& uvd,
                                 const ReferenceBone& bone) {
  const Eigen::Vector3d delta = (uvd.row(bone.to) - uvd.row(bone.from)).transpose();
  return weak_scale_from_bone(delta.head<2>(), delta.z());
}

WeakCamera weak_s_t_from_keypoints(const Joints& joints, const Keypoints& keypoints,
                                   const Eigen::Vector2d& root_px) {
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector2d xy = joints.row(i).head<2>().transpose();
    num += xy.dot(keypoints.row(i).transpose() - root_px);
    den += xy.squaredNorm();
  }
  if (!(den > 0.0)) {
    throw DegenerateError("weak scale: all joints coincide with the root");
  }
  return {num / den, root_px};
}

double persp_scale_analytic(const Intrinsics& k, const Joints& joints, const Keypoints& keypoints,
                            const Eigen::Vector2d& root_px, double z_root) {
  if (!(z_root > 0.0)) {
    throw DegenerateError("analytic scale needs a positive root depth");
  }
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector2d focal(k.fx * joints(i, 0), k.fy * joints(i, 1));
    num += focal.dot(keypoints.row(i).transpose() - root_px);
    den += focal.squaredNorm();
  }
  if (!(den > 0.0)) {
    throw DegenerateError("analytic scale: all joints coincide with the root");
  }
  return z_root * num / den;
}

Intrinsics load_intrinsics(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                 j.at("cy").get<double>()};
    CameraSpec::perspective(k.fx, k.fy, k.cx, k.cy).validate();
    return k;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_intrinsics(const Intrinsics& k, const std::filesystem::path& path) {
  write_json_file({{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}, path);
}

} // namespace handfit
