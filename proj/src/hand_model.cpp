#include "handfit/hand_model.hpp"

#include <cmath>
#include <set>
#include <string>

namespace handfit {

const std::array<std::string_view, kNumKeypoints>& joint_names() {
  static const std::array<std::string_view, kNumKeypoints> names = {
      "wrist",     "thumb1",  "thumb2",   "thumb3",   "index1",   "index2",   "index3",
      "middle1",   "middle2", "middle3",  "ring1",    "ring2",    "ring3",    "pinky1",
      "pinky2",    "pinky3",  "thumb_tip", "index_tip", "middle_tip", "ring_tip", "pinky_tip"};
  return names;
}

FingerChain finger_chain(int finger) {
  return {1 + 3 * finger, 2 + 3 * finger, 3 + 3 * finger, kNumJoints + finger};
}

HandParams::HandParams() {
  theta.fill(Eigen::Quaterniond::Identity());
}

ParamVector HandParams::flat() const {
  ParamVector out;
  for (int k = 0; k < kNumJoints; ++k) {
    out.segment<4>(4 * k) = to_wxyz(theta[k]);
  }
  out.tail<kNumShape>() = beta;
  return out;
}

HandParams HandParams::from_flat(const ParamVector& flat, const Eigen::Vector3d& root) {
  HandParams params;
  for (int k = 0; k < kNumJoints; ++k) {
    params.theta[k] = from_wxyz(flat.segment<4>(4 * k));
  }
  params.beta = flat.tail<kNumShape>();
  params.root = root;
  return params;
}

void HandParams::normalize() {
  for (auto& q : theta) {
    q.normalize();
  }
}

void HandParams::validate(double tolerance) const {
  for (int k = 0; k < kNumJoints; ++k) {
    const double norm = theta[k].norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > tolerance) {
      throw DataError("quaternion of joint " + std::to_string(k) + " is not unit (norm " +
                      std::to_string(norm) + ")");
    }
  }
  if (!beta.allFinite() || !root.allFinite()) {
    throw DataError("non-finite shape or root parameters");
  }
}

HandModel::HandModel(Vertices template_vertices,
                     Faces faces,
                     Eigen::MatrixXd blend_weights,
                     std::array<int, kNumJoints> parents,
                     Eigen::MatrixXd shape_dirs,
                     Eigen::MatrixXd joint_regressor,
                     std::array<int, kNumTips> tip_vertex_ids,
                     HandSide side)
    : template_vertices_(std::move(template_vertices)),
      faces_(std::move(faces)),
      blend_weights_(std::move(blend_weights)),
      parents_(parents),
      shape_dirs_(std::move(shape_dirs)),
      joint_regressor_(std::move(joint_regressor)),
      tip_vertex_ids_(tip_vertex_ids),
      side_(side) {
  validate();
  build_rig();
}

void HandModel::validate() const {
  const int v = num_vertices();
  if (v == 0) {
    throw DataError("model has no vertices");
  }
  if (!template_vertices_.allFinite()) {
    throw DataError("non-finite template vertex");
  }
  if (blend_weights_.rows() != v || blend_weights_.cols() != kNumJoints) {
    throw DataError("blend weights must be V x 16");
  }
  for (int i = 0; i < v; ++i) {
    if ((blend_weights_.row(i).array() < 0).any() || !blend_weights_.row(i).allFinite()) {
      throw DataError("negative or non-finite blend weight at vertex " + std::to_string(i));
    }
    if (std::abs(blend_weights_.row(i).sum() - 1.0) > 1e-6) {
      throw DataError("blend weights of vertex " + std::to_string(i) + " do not sum to 1");
    }
  }
  if (parents_[0] != -1) {
    throw DataError("joint 0 must be the root (parent -1)");
  }
  for (int k = 1; k < kNumJoints; ++k) {
    if (parents_[k] < 0 || parents_[k] >= k) {
      throw DataError("parent of joint " + std::to_string(k) + " must precede it");
    }
  }
  if (faces_.size() > 0 && (faces_.minCoeff() < 0 || faces_.maxCoeff() >= v)) {
    throw DataError("face index out of range");
  }
  if (shape_dirs_.rows() != 3 * v || shape_dirs_.cols() != kNumShape || !shape_dirs_.allFinite()) {
    throw DataError("shape blend shapes must be finite and 3V x 10");
  }
  if (joint_regressor_.rows() != kNumJoints || joint_regressor_.cols() != v ||
      !joint_regressor_.allFinite()) {
    throw DataError("joint regressor must be finite and 16 x V");
  }
  std::set<int> tips;
  for (int id : tip_vertex_ids_) {
    if (id < 0 || id >= v) {
      throw DataError("tip vertex id out of range");
    }
    tips.insert(id);
  }
  if (tips.size() != kNumTips) {
    throw DataError("tip vertex ids must be distinct");
  }
}

Vertices HandModel::shaped_vertices(const ShapeVector& beta) const {
  const Eigen::VectorXd offsets = shape_dirs_ * beta;
  Vertices out = template_vertices_;
  for (int i = 0; i < num_vertices(); ++i) {
    out.row(i) += offsets.segment<3>(3 * i).transpose();
  }
  return out;
}

void HandModel::build_rig() {
  const int v = num_vertices();
  rig_.rest_joints = joint_regressor_ * template_vertices_;
  for (int j = 0; j < kNumJoints; ++j) {
    for (int c = 0; c < 3; ++c) {
      Eigen::Matrix<double, 1, kNumShape> row = Eigen::Matrix<double, 1, kNumShape>::Zero();
      for (int i = 0; i < v; ++i) {
        if (joint_regressor_(j, i) != 0.0) {
          row += joint_regressor_(j, i) * shape_dirs_.row(3 * i + c);
        }
      }
      rig_.rest_joints_shape.row(3 * j + c) = row;
    }
  }

  for (int kp = 0; kp < kNumKeypoints; ++kp) {
    Eigen::RowVectorXd regressor = Eigen::RowVectorXd::Zero(v);
    if (kp < kNumJoints) {
      regressor = joint_regressor_.row(kp);
    } else {
      regressor(tip_vertex_ids_[kp - kNumJoints]) = 1.0;
    }
    auto& terms = rig_.terms[kp];
    terms.clear();
    for (int k = 0; k < kNumJoints; ++k) {
      KeypointTerm term{k, 0.0, Eigen::Vector3d::Zero(), Eigen::Matrix<double, 3, kNumShape>::Zero()};
      bool used = false;
      for (int i = 0; i < v; ++i) {
        const double c = regressor(i) * blend_weights_(i, k);
        if (c == 0.0) {
          continue;
        }
        used = true;
        term.weight += c;
        term.offset += c * template_vertices_.row(i).transpose();
        term.offset_shape += c * shape_dirs_.middleRows<3>(3 * i);
      }
      if (!used) {
        continue;
      }
      term.offset -= term.weight * rig_.rest_joints.row(k).transpose();
      term.offset_shape -= term.weight * rig_.rest_joints_shape.middleRows<3>(3 * k);
      terms.push_back(term);
    }
  }
}

std::array<Eigen::Matrix3d, kNumJoints> local_rotations(const HandParams& params) {
  std::array<Eigen::Matrix3d, kNumJoints> local;
  for (int k = 0; k < kNumJoints; ++k) {
    local[k] = rotation_from_wxyz<double>(to_wxyz(params.theta[k].normalized()));
  }
  return local;
}

SkeletonJoints rest_joints(const HandModel& model, const ShapeVector& beta) {
  const KeypointRig& rig = model.rig();
  const Eigen::Matrix<double, kNumJoints * 3, 1> offsets = rig.rest_joints_shape * beta;
  SkeletonJoints joints = rig.rest_joints;
  for (int j = 0; j < kNumJoints; ++j) {
    joints.row(j) += offsets.segment<3>(3 * j).transpose();
  }
  return joints;
}

Vertices blend_vertices(const HandModel& model, const HandParams& params) {
  const Vertices shaped = model.shaped_vertices(params.beta);
  const SkeletonJoints rest = rest_joints(model, params.beta);
  const auto pose = forward_kinematics<double>(model.parents(), rest, local_rotations(params));

  // Written as displacements from the rest pose so that identity rotations leave every
  // vertex bit-identical: x + sum_k w_k ((R_k - I)(x - J_k) + d_k), with d_k the
  // displacement of joint k accumulated down the chain.
  std::array<Eigen::Matrix3d, kNumJoints> bend;
  std::array<Eigen::Vector3d, kNumJoints> shift;
  for (int k = 0; k < kNumJoints; ++k) {
    bend[k] = pose.rotation[k] - Eigen::Matrix3d::Identity();
    const int p = model.parents()[k];
    shift[k] = p < 0 ? Eigen::Vector3d::Zero()
                     : Eigen::Vector3d(shift[p] + bend[p] * (rest.row(k) - rest.row(p)).transpose());
  }

  const Eigen::MatrixXd& weights = model.blend_weights();
  Vertices out(model.num_vertices(), 3);
  for (int i = 0; i < model.num_vertices(); ++i) {
    const Eigen::Vector3d x = shaped.row(i).transpose();
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k < kNumJoints; ++k) {
      const double w = weights(i, k);
      if (w != 0.0) {
        acc += w * (bend[k] * (x - rest.row(k).transpose()) + shift[k]);
      }
    }
    out.row(i) = (x + acc).transpose();
  }
  return out;
}

Mesh skin(const HandModel& model, const HandParams& params) {
  params.validate();
  Mesh mesh{blend_vertices(model, params), model.faces()};
  return apply_root(model, std::move(mesh), params.root);
}

Joints regress_joints(const HandModel& model, const Vertices& vertices) {
  if (vertices.rows() != model.num_vertices()) {
    throw DataError("mesh vertex count does not match the model");
  }
  Joints joints;
  joints.topRows<kNumJoints>() = model.joint_regressor() * vertices;
  for (int t = 0; t < kNumTips; ++t) {
    joints.row(kNumJoints + t) = vertices.row(model.tip_vertex_ids()[t]);
  }
  return joints;
}

Mesh apply_root(const HandModel& model, Mesh mesh, const Eigen::Vector3d& p_root) {
  const Eigen::RowVector3d root = model.joint_regressor().row(0) * mesh.vertices;
  mesh.vertices.rowwise() += p_root.transpose() - root;
  return mesh;
}

Joints posed_keypoints(const HandModel& model, const HandParams& params) {
  const KeypointRig& rig = model.rig();
  const SkeletonJoints rest = rest_joints(model, params.beta);
  const auto pose = forward_kinematics<double>(model.parents(), rest, local_rotations(params));
  Joints out;
  for (int kp = 0; kp < kNumKeypoints; ++kp) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const KeypointTerm& term : rig.terms[kp]) {
      acc += pose.rotation[term.joint] * (term.offset + term.offset_shape * params.beta) +
             term.weight * pose.position[term.joint];
    }
    out.row(kp) = acc.transpose();
  }
  return out;
}

Joints root_relative_keypoints(const HandModel& model, const HandParams& params) {
  Joints joints = posed_keypoints(model, params);
  const Eigen::RowVector3d root = joints.row(0);
  joints.rowwise() -= root;
  return joints;
}

HandModel mirrored(const HandModel& model) {
  Vertices verts = model.template_vertices();
  verts.col(0) = -verts.col(0);
  Faces faces = model.faces();
  faces.col(1).swap(faces.col(2));
  Eigen::MatrixXd dirs = model.shape_dirs();
  for (int i = 0; i < model.num_vertices(); ++i) {
    dirs.row(3 * i) = -dirs.row(3 * i);
  }
  return HandModel(std::move(verts), std::move(faces), model.blend_weights(), model.parents(),
                   std::move(dirs), model.joint_regressor(), model.tip_vertex_ids(),
                   model.side() == HandSide::right ? HandSide::left : HandSide::right);
}

} // namespace handfit
