#include "handfit/energy.hpp"

#include <cmath>

namespace handfit {

void EnergyWeights::validate() const {
  if (!(joint >= 0) || !(twist >= 0) || !(identity >= 0)) {
    throw DataError("energy weights must be non-negative");
  }
}

Eigen::Vector2d Reprojection::pixel(const Eigen::Vector3d& q, int joint) const {
  if (camera.mode == ProjectionMode::weak) {
    return project_weak<double>(camera.weak, q);
  }
  const Eigen::Vector3d p = scale * q + root;
  if (!(p.z() > 0.0)) {
    throw BehindCameraError(joint, p.z());
  }
  return project_persp<double>(camera.intrinsics, p);
}

double reprojection_energy(const Joints& joints,
                           const Reprojection& reprojection,
                           const Keypoints& keypoints,
                           const Confidences& confidences,
                           ResidualNormalization normalization,
                           Joints* grad) {
  const double norm = normalization == ResidualNormalization::mean ? 1.0 / kNumKeypoints : 1.0;
  const Intrinsics& k = reprojection.camera.intrinsics;
  const bool weak = reprojection.camera.mode == ProjectionMode::weak;
  double energy = 0.0;
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector3d q = joints.row(i).transpose();
    const Eigen::Vector2d residual = reprojection.pixel(q, i) - keypoints.row(i).transpose();
    const double c = confidences(i) * norm;
    energy += c * residual.squaredNorm();
    if (grad == nullptr) {
      continue;
    }
    const Eigen::Vector2d g_pixel = 2.0 * c * residual;
    Eigen::Vector3d g;
    if (weak) {
      const double s = reprojection.camera.weak.s;
      g = {s * g_pixel.x(), s * g_pixel.y(), 0.0};
    } else {
      const Eigen::Vector3d p = reprojection.scale * q + reprojection.root;
      const double inv_z = 1.0 / p.z();
      // d(u, v) / d p
      g.x() = g_pixel.x() * k.fx * inv_z;
      g.y() = g_pixel.y() * k.fy * inv_z;
      g.z() = -(g_pixel.x() * k.fx * p.x() + g_pixel.y() * k.fy * p.y()) * inv_z * inv_z;
      g *= reprojection.scale;
    }
    grad->row(i) = g.transpose();
  }
  return energy;
}

double e_scale(double s,
               const HandModel& model,
               const HandParams& params,
               const Intrinsics& intrinsics,
               const Keypoints& keypoints,
               const Eigen::Vector3d& p_root,
               const Confidences& confidences,
               ResidualNormalization normalization) {
  Reprojection reprojection{CameraSpec::perspective(intrinsics.fx, intrinsics.fy, intrinsics.cx,
                                                    intrinsics.cy),
                            s, p_root};
  return reprojection_energy(root_relative_keypoints(model, params), reprojection, keypoints,
                             confidences, normalization);
}

double e_joint(const HandModel& model,
               const HandParams& params,
               const Reprojection& reprojection,
               const Keypoints& keypoints,
               const Confidences& confidences,
               ResidualNormalization normalization) {
  return reprojection_energy(root_relative_keypoints(model, params), reprojection, keypoints,
                             confidences, normalization);
}

namespace {

struct TwistGrad {
  Eigen::Vector3d ab, bc, cd;
};

constexpr double kTwistKinkBand = 1e-10;

double twist_with_grad(const Eigen::Vector3d& ab,
                       const Eigen::Vector3d& bc,
                       const Eigen::Vector3d& cd,
                       TwistGrad* grad) {
  const Eigen::Vector3d n1 = ab.cross(bc);
  const Eigen::Vector3d n2 = bc.cross(cd);
  const double triple = n1.dot(cd);
  const double dot = n1.dot(n2);
  const double energy = std::abs(triple) - std::min(0.0, dot);
  if (grad != nullptr) {
    // Coplanar or straight fingers give products at round-off level whose sign is
    // noise; that band counts as the kink.
    const double band = kTwistKinkBand * ab.norm() * bc.norm() * cd.norm();
    const double sign = triple > band ? 1.0 : (triple < -band ? -1.0 : 0.0);
    grad->ab = sign * bc.cross(cd);
    grad->bc = sign * cd.cross(ab);
    grad->cd = sign * n1;
    if (dot < -band * bc.norm()) {
      grad->ab -= bc.cross(n2);
      grad->bc -= n2.cross(ab) + cd.cross(n1);
      grad->cd -= n1.cross(bc);
    }
  }
  return energy;
}

} // namespace

double twist_of_bones(const Eigen::Vector3d& ab, const Eigen::Vector3d& bc, const Eigen::Vector3d& cd) {
  return twist_with_grad(ab, bc, cd, nullptr);
}

double e_twist(const Joints& joints, Joints* grad) {
  if (grad != nullptr) {
    grad->setZero();
  }
  double energy = 0.0;
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerChain chain = finger_chain(f);
    const Eigen::Vector3d a = joints.row(chain.tip).transpose();
    const Eigen::Vector3d b = joints.row(chain.distal).transpose();
    const Eigen::Vector3d c = joints.row(chain.middle).transpose();
    const Eigen::Vector3d d = joints.row(chain.base).transpose();
    TwistGrad g;
    energy += twist_with_grad(a - b, b - c, c - d, grad != nullptr ? &g : nullptr);
    if (grad != nullptr) {
      grad->row(chain.tip) += g.ab.transpose();
      grad->row(chain.distal) += (g.bc - g.ab).transpose();
      grad->row(chain.middle) += (g.cd - g.bc).transpose();
      grad->row(chain.base) -= g.cd.transpose();
    }
  }
  return energy;
}

double e_identity(const HandParams& params, const HandParams& init) {
  double energy = (params.beta - init.beta).squaredNorm();
  for (int k = 0; k < kNumJoints; ++k) {
    Eigen::Vector4d q = to_wxyz(params.theta[k]);
    const Eigen::Vector4d q0 = to_wxyz(init.theta[k]);
    if (q.dot(q0) < 0) {
      q = -q;
    }
    energy += (q - q0).squaredNorm();
  }
  return energy;
}

TailorEnergy::TailorEnergy(const HandModel& model,
                           const HandParams& init,
                           const Keypoints& keypoints,
                           const Confidences& confidences,
                           const Reprojection& reprojection,
                           const EnergyWeights& weights,
                           ResidualNormalization normalization)
    : model_(&model),
      init_(init),
      init_flat_(init.flat()),
      keypoints_(keypoints),
      confidences_(confidences),
      reprojection_(reprojection),
      weights_(weights),
      normalization_(normalization) {
  weights_.validate();
}

EnergyReport TailorEnergy::evaluate(const ParamVector& x, bool with_gradient) const {
  const KeypointRig& rig = model_->rig();
  const auto& parents = model_->parents();
  const ShapeVector beta = x.tail<kNumShape>();

  std::array<Eigen::Vector4d, kNumJoints> unit;
  std::array<Eigen::Matrix3d, kNumJoints> local;
  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector4d q = x.segment<4>(4 * k);
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DataError("degenerate quaternion for joint " + std::to_string(k));
    }
    unit[k] = q / n;
    local[k] = rotation_from_wxyz<double>(unit[k]);
  }

  SkeletonJoints rest = rig.rest_joints;
  {
    const Eigen::Matrix<double, kNumJoints * 3, 1> offsets = rig.rest_joints_shape * beta;
    for (int j = 0; j < kNumJoints; ++j) {
      rest.row(j) += offsets.segment<3>(3 * j).transpose();
    }
  }
  const auto pose = forward_kinematics<double>(parents, rest, local);

  Joints posed;
  for (int i = 0; i < kNumKeypoints; ++i) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const KeypointTerm& term : rig.terms[i]) {
      acc += pose.rotation[term.joint] * (term.offset + term.offset_shape * beta) +
             term.weight * pose.position[term.joint];
    }
    posed.row(i) = acc.transpose();
  }
  Joints relative = posed;
  relative.rowwise() -= posed.row(0);

  EnergyReport report;
  Joints g_relative;
  Joints g_twist;
  report.terms.joint = reprojection_energy(relative, reprojection_, keypoints_, confidences_,
                                           normalization_, with_gradient ? &g_relative : nullptr);
  report.terms.twist = e_twist(posed, with_gradient ? &g_twist : nullptr);

  ParamVector g_identity = ParamVector::Zero();
  double identity = 0.0;
  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector4d q = x.segment<4>(4 * k);
    const Eigen::Vector4d q0 = init_flat_.segment<4>(4 * k);
    const double sign = q.dot(q0) < 0 ? -1.0 : 1.0;
    identity += (sign * q - q0).squaredNorm();
    g_identity.segment<4>(4 * k) = 2.0 * (q - sign * q0);
  }
  identity += (beta - init_flat_.tail<kNumShape>()).squaredNorm();
  g_identity.tail<kNumShape>() = 2.0 * (beta - init_flat_.tail<kNumShape>());
  report.terms.identity = identity;

  report.total = weights_.joint * report.terms.joint + weights_.twist * report.terms.twist +
                 weights_.identity * report.terms.identity;
  if (!with_gradient) {
    return report;
  }

  // Back to absolute keypoints: relative_i = posed_i - posed_0.
  Joints g_posed = weights_.twist * g_twist;
  for (int i = 1; i < kNumKeypoints; ++i) {
    g_posed.row(i) += weights_.joint * g_relative.row(i);
    g_posed.row(0) -= weights_.joint * g_relative.row(i);
  }

  std::array<Eigen::Matrix3d, kNumJoints> g_rotation;
  std::array<Eigen::Vector3d, kNumJoints> g_position;
  g_rotation.fill(Eigen::Matrix3d::Zero());
  g_position.fill(Eigen::Vector3d::Zero());
  ShapeVector g_beta = ShapeVector::Zero();

  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector3d g = g_posed.row(i).transpose();
    for (const KeypointTerm& term : rig.terms[i]) {
      const Eigen::Vector3d offset = term.offset + term.offset_shape * beta;
      g_rotation[term.joint] += g * offset.transpose();
      g_position[term.joint] += term.weight * g;
      g_beta += term.offset_shape.transpose() * (pose.rotation[term.joint].transpose() * g);
    }
  }

  std::array<Eigen::Matrix3d, kNumJoints> g_local;
  SkeletonJoints g_rest = SkeletonJoints::Zero();
  for (int k = kNumJoints - 1; k >= 1; --k) {
    const int p = parents[k];
    const Eigen::Matrix3d& parent_rotation = pose.rotation[p];
    g_local[k] = parent_rotation.transpose() * g_rotation[k];
    g_rotation[p] += g_rotation[k] * local[k].transpose();
    const Eigen::Vector3d bone = (rest.row(k) - rest.row(p)).transpose();
    g_rotation[p] += g_position[k] * bone.transpose();
    const Eigen::Vector3d g_bone = parent_rotation.transpose() * g_position[k];
    g_rest.row(k) += g_bone.transpose();
    g_rest.row(p) -= g_bone.transpose();
    g_position[p] += g_position[k];
  }
  g_local[0] = g_rotation[0];
  g_rest.row(0) += g_position[0].transpose();

  {
    Eigen::Matrix<double, kNumJoints * 3, 1> g_rest_flat;
    for (int j = 0; j < kNumJoints; ++j) {
      g_rest_flat.segment<3>(3 * j) = g_rest.row(j).transpose();
    }
    g_beta += rig.rest_joints_shape.transpose() * g_rest_flat;
  }

  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector4d g_unit = rotation_gradient_to_wxyz(unit[k], g_local[k]);
    report.gradient.segment<4>(4 * k) = normalization_gradient(x.segment<4>(4 * k), g_unit);
  }
  report.gradient.tail<kNumShape>() = g_beta;
  report.gradient += weights_.identity * g_identity;
  return report;
}

EnergyReport total_energy_and_grad(const HandModel& model,
                                   const HandParams& params,
                                   const HandParams& init,
                                   const Keypoints& keypoints,
                                   const Confidences& confidences,
                                   const Reprojection& reprojection,
                                   const EnergyWeights& weights,
                                   ResidualNormalization normalization) {
  return TailorEnergy(model, init, keypoints, confidences, reprojection, weights, normalization)
      .evaluate(params);
}

} // namespace handfit
