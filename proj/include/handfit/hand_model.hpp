#pragma once

#include "handfit/quaternion.hpp"
#include "handfit/types.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace handfit {

/*
 * Canonical joint order, shared by every module and file format:
 *
 *   0        wrist (root)
 *   1..3     thumb  proximal -> distal
 *   4..6     index  proximal -> distal
 *   7..9     middle proximal -> distal
 *   10..12   ring   proximal -> distal
 *   13..15   pinky  proximal -> distal
 *   16..20   fingertips: thumb, index, middle, ring, pinky
 *
 * Joints 0..15 carry rotations and are regressed from the mesh; 16..20 are
 * mesh vertices.
 */
const std::array<std::string_view, kNumKeypoints>& joint_names();

/// The four keypoints of one finger ordered palm -> tip.
struct FingerChain {
  int base;
  int middle;
  int distal;
  int tip;
};
FingerChain finger_chain(int finger);

enum class HandSide { right, left };

/// Pose, shape and root translation. Quaternions are local joint rotations, root first.
struct HandParams {
  std::array<Eigen::Quaterniond, kNumJoints> theta;
  ShapeVector beta = ShapeVector::Zero();
  Eigen::Vector3d root = Eigen::Vector3d::Zero();

  HandParams();

  /// Theta as (w, x, y, z) blocks followed by beta. Root is not part of it.
  ParamVector flat() const;
  static HandParams from_flat(const ParamVector& flat, const Eigen::Vector3d& root = Eigen::Vector3d::Zero());

  void normalize();
  /// Throws DataError when a quaternion deviates from unit norm by more than `tolerance`
  /// or any value is non-finite.
  void validate(double tolerance = 1e-6) const;
};

struct Mesh {
  Vertices vertices;
  Faces faces;
};

/// One joint's contribution to a keypoint after folding skinning weights and the
/// joint regressor together: keypoint += R_k * (offset + offset_shape * beta) + weight * p_k,
/// where (R_k, p_k) is joint k's posed world rotation and position.
struct KeypointTerm {
  int joint;
  double weight;
  Eigen::Vector3d offset;
  Eigen::Matrix<double, 3, kNumShape> offset_shape;
};

/// Model data reduced to what the 21 keypoints need. Built once per HandModel.
struct KeypointRig {
  std::array<std::vector<KeypointTerm>, kNumKeypoints> terms;
  SkeletonJoints rest_joints;
  /// d(rest joint j, axis c) / d beta, row 3 * j + c.
  Eigen::Matrix<double, kNumJoints * 3, kNumShape> rest_joints_shape;
};

/// Rigged hand template. Immutable once constructed; the constructor checks every
/// invariant and throws DataError on violation.
class HandModel {
 public:
  HandModel(Vertices template_vertices,
            Faces faces,
            Eigen::MatrixXd blend_weights,
            std::array<int, kNumJoints> parents,
            Eigen::MatrixXd shape_dirs,
            Eigen::MatrixXd joint_regressor,
            std::array<int, kNumTips> tip_vertex_ids,
            HandSide side = HandSide::right);

  int num_vertices() const { return static_cast<int>(template_vertices_.rows()); }
  const Vertices& template_vertices() const { return template_vertices_; }
  const Faces& faces() const { return faces_; }
  /// V x 16, rows are convex weights.
  const Eigen::MatrixXd& blend_weights() const { return blend_weights_; }
  const std::array<int, kNumJoints>& parents() const { return parents_; }
  /// 3V x 10; row 3 * v + c is the displacement of vertex v along axis c per unit beta.
  const Eigen::MatrixXd& shape_dirs() const { return shape_dirs_; }
  /// 16 x V.
  const Eigen::MatrixXd& joint_regressor() const { return joint_regressor_; }
  const std::array<int, kNumTips>& tip_vertex_ids() const { return tip_vertex_ids_; }
  HandSide side() const { return side_; }
  const KeypointRig& rig() const { return rig_; }

  Vertices shaped_vertices(const ShapeVector& beta) const;

 private:
  void validate() const;
  void build_rig();

  Vertices template_vertices_;
  Faces faces_;
  Eigen::MatrixXd blend_weights_;
  std::array<int, kNumJoints> parents_;
  Eigen::MatrixXd shape_dirs_;
  Eigen::MatrixXd joint_regressor_;
  std::array<int, kNumTips> tip_vertex_ids_;
  HandSide side_;
  KeypointRig rig_;
};

/// World rotation and position of every skeleton joint.
template <typename Scalar>
struct SkeletonPose {
  std::array<Matrix3<Scalar>, kNumJoints> rotation;
  std::array<Vector3<Scalar>, kNumJoints> position;
};

/// Composes local rotations root to leaf; each joint pivots about its rest location.
/// The root stays at its rest location.
template <typename Scalar>
SkeletonPose<Scalar> forward_kinematics(const std::array<int, kNumJoints>& parents,
                                        const Eigen::Matrix<Scalar, kNumJoints, 3>& rest,
                                        const std::array<Matrix3<Scalar>, kNumJoints>& local) {
  SkeletonPose<Scalar> pose;
  pose.rotation[0] = local[0];
  pose.position[0] = rest.row(0).transpose();
  for (int k = 1; k < kNumJoints; ++k) {
    const int p = parents[k];
    pose.rotation[k] = pose.rotation[p] * local[k];
    pose.position[k] = pose.rotation[p] * (rest.row(k) - rest.row(p)).transpose() + pose.position[p];
  }
  return pose;
}

/// Local rotation matrices of a parameter set; quaternions are normalized first.
std::array<Eigen::Matrix3d, kNumJoints> local_rotations(const HandParams& params);

SkeletonJoints rest_joints(const HandModel& model, const ShapeVector& beta);

/// Linear blend skinning without root translation.
Vertices blend_vertices(const HandModel& model, const HandParams& params);

/// Posed mesh with the regressed root joint placed at params.root.
Mesh skin(const HandModel& model, const HandParams& params);

Joints regress_joints(const HandModel& model, const Vertices& vertices);
inline Joints regress_joints(const HandModel& model, const Mesh& mesh) {
  return regress_joints(model, mesh.vertices);
}

/// Translates the mesh so that its regressed root joint lands at p_root.
Mesh apply_root(const HandModel& model, Mesh mesh, const Eigen::Vector3d& p_root);

/// The 21 keypoints of blend_vertices(model, params) computed from the rig alone.
Joints posed_keypoints(const HandModel& model, const HandParams& params);

/// posed_keypoints minus the root keypoint.
Joints root_relative_keypoints(const HandModel& model, const HandParams& params);

/// Deterministic procedural hand with at most `vertex_budget` vertices (>= 64).
HandModel make_toy_model(std::uint64_t seed, int vertex_budget);

/// Mirror image across the x = 0 plane with reversed face winding and flipped side tag.
HandModel mirrored(const HandModel& model);

} // namespace handfit
