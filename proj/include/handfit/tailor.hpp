#pragma once

#include "handfit/adam.hpp"
#include "handfit/camera.hpp"
#include "handfit/energy.hpp"
#include "handfit/hand_model.hpp"
#include "handfit/observations.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace handfit {

struct FitConfig {
  ProjectionMode mode = ProjectionMode::perspective;
  int iterations = 20;
  AdamConfig adam;
  EnergyWeights weights;
  bool renormalize_quaternions = true;
  /// Stop before a step once the gradient norm falls below this value.
  std::optional<double> early_stop_grad_norm;
  ResidualNormalization normalization = ResidualNormalization::mean;

  void validate() const;
};

struct FitTiming {
  double scale_ms = 0.0;
  double iterate_ms = 0.0;
  double total_ms = 0.0;
  double per_iteration_ms = 0.0;
};

struct FitResult {
  /// Refined theta and beta; root is the fixed p_root (zero in weak mode).
  HandParams params;
  double s_star = 0.0;
  /// Camera the energy was evaluated with: the input intrinsics, or the weak (s, t).
  CameraSpec camera;
  /// Reprojection used for the whole second step.
  Reprojection reprojection;
  /// Total energy at the start of each iteration.
  std::vector<double> energy_trace;
  /// Total energy and terms after the last step.
  double final_energy = 0.0;
  EnergyTerms final_terms;
  int iterations_run = 0;
  FitTiming timing;
};

/// Root joint in camera coordinates from the root keypoint and its depth.
Eigen::Vector3d root_from_observations(const Intrinsics& intrinsics, const Observations& obs);

/// Step one: the scale-compensated reprojection for `init`, solved in closed form.
Reprojection solve_scale(const HandModel& model,
                         const HandParams& init,
                         const Observations& obs,
                         const CameraSpec& camera,
                         ProjectionMode mode);

/// Two-step refinement: closed-form scale, then Adam on theta and beta with the
/// scale and root frozen. Deterministic for fixed inputs.
FitResult tailor_fit(const HandModel& model,
                     const HandParams& init,
                     const Observations& obs,
                     const CameraSpec& camera,
                     const FitConfig& config);

/// Refined mesh in the frame the fit used: s* * (M - root joint) + p_root in
/// perspective mode, the root-centered model-unit mesh in weak mode.
Mesh fitted_mesh(const HandModel& model, const FitResult& result);

/// Pixels of the refined keypoints under the fit's reprojection.
Keypoints fitted_keypoints(const HandModel& model, const FitResult& result);

/// Mean pixel distance between two keypoint sets.
double mean_pixel_error(const Keypoints& a, const Keypoints& b);

/// Fit report: s_star, refined parameters, energy_trace, final energy and (unless
/// `include_timing` is false) a "timing" object in milliseconds.
nlohmann::json fit_report_json(const FitResult& result, bool include_timing = true);

} // namespace handfit
