#pragma once

#include "handfit/camera.hpp"
#include "handfit/hand_model.hpp"

namespace handfit {

using Confidences = Eigen::Matrix<double, kNumKeypoints, 1>;

/// Term weights of the refinement objective.
struct EnergyWeights {
  double joint = 1.0;
  double twist = 100.0;
  double identity = 0.1;

  void validate() const;
};

/// Mean divides the squared reprojection residual by the keypoint count; sum keeps
/// the plain sum.
enum class ResidualNormalization { mean, sum };

/// Maps root-relative keypoints q to pixels: camera(scale * q + root).
/// For weak cameras scale = 1 and root = 0, the camera's (s, t) carry the fit.
struct Reprojection {
  CameraSpec camera;
  double scale = 1.0;
  Eigen::Vector3d root = Eigen::Vector3d::Zero();

  /// Throws BehindCameraError naming `joint` when the point has z <= 0.
  Eigen::Vector2d pixel(const Eigen::Vector3d& q, int joint) const;
};

/// Confidence-weighted squared pixel residual of root-relative joints. When `grad`
/// is non-null it receives d energy / d joints.
double reprojection_energy(const Joints& joints,
                           const Reprojection& reprojection,
                           const Keypoints& keypoints,
                           const Confidences& confidences,
                           ResidualNormalization normalization,
                           Joints* grad = nullptr);

/// Scale energy as a function of the compensation factor s (perspective only).
double e_scale(double s,
               const HandModel& model,
               const HandParams& params,
               const Intrinsics& intrinsics,
               const Keypoints& keypoints,
               const Eigen::Vector3d& p_root,
               const Confidences& confidences = Confidences::Ones(),
               ResidualNormalization normalization = ResidualNormalization::mean);

/// Joint-location energy of (theta, beta) at a frozen reprojection.
double e_joint(const HandModel& model,
               const HandParams& params,
               const Reprojection& reprojection,
               const Keypoints& keypoints,
               const Confidences& confidences = Confidences::Ones(),
               ResidualNormalization normalization = ResidualNormalization::mean);

/// Unnatural-twist penalty summed over the five fingers. For each finger with joints
/// a (tip), b, c, d (base): |(ab x bc) . cd| - min(0, (ab x bc) . (bc x cd)).
/// Subgradient 0 is used at both kinks; products within 1e-10 of their bone-length
/// scale count as the kink.
double e_twist(const Joints& joints, Joints* grad = nullptr);

/// Single-finger twist from its three bone vectors (tip-most first).
double twist_of_bones(const Eigen::Vector3d& ab, const Eigen::Vector3d& bc, const Eigen::Vector3d& cd);

/// Squared distance to the initialization in flattened quaternion and shape space.
/// Each quaternion is sign-aligned with its initial value before differencing.
double e_identity(const HandParams& params, const HandParams& init);

struct EnergyTerms {
  double joint = 0.0;
  double twist = 0.0;
  double identity = 0.0;
};

struct EnergyReport {
  double total = 0.0;
  EnergyTerms terms;
  /// d total / d flat parameters (see HandParams::flat()).
  ParamVector gradient = ParamVector::Zero();
};

/// The refinement objective with everything but (theta, beta) frozen.
/// Quaternions are normalized inside the evaluation, so the energy is defined for
/// any non-zero flat vector and its gradient is tangent to each quaternion's sphere
/// except for the identity term.
class TailorEnergy {
 public:
  TailorEnergy(const HandModel& model,
               const HandParams& init,
               const Keypoints& keypoints,
               const Confidences& confidences,
               const Reprojection& reprojection,
               const EnergyWeights& weights,
               ResidualNormalization normalization = ResidualNormalization::mean);

  EnergyReport evaluate(const ParamVector& x, bool with_gradient = true) const;
  EnergyReport evaluate(const HandParams& params, bool with_gradient = true) const {
    return evaluate(params.flat(), with_gradient);
  }
  double value(const ParamVector& x) const { return evaluate(x, false).total; }

  const HandModel& model() const { return *model_; }
  const HandParams& init() const { return init_; }
  const Reprojection& reprojection() const { return reprojection_; }
  const EnergyWeights& weights() const { return weights_; }

 private:
  const HandModel* model_;
  HandParams init_;
  ParamVector init_flat_;
  Keypoints keypoints_;
  Confidences confidences_;
  Reprojection reprojection_;
  EnergyWeights weights_;
  ResidualNormalization normalization_;
};

/// Convenience wrapper over TailorEnergy for one evaluation.
EnergyReport total_energy_and_grad(const HandModel& model,
                                   const HandParams& params,
                                   const HandParams& init,
                                   const Keypoints& keypoints,
                                   const Confidences& confidences,
                                   const Reprojection& reprojection,
                                   const EnergyWeights& weights,
                                   ResidualNormalization normalization = ResidualNormalization::mean);

} // namespace handfit
