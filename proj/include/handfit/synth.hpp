#pragma once

#include "handfit/camera.hpp"
#include "handfit/hand_model.hpp"
#include "handfit/observations.hpp"
#include "handfit/random.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace handfit {

/*
 * Articulation limits (radians) used when sampling ground-truth poses. Each finger
 * joint bends about the axis perpendicular to its rest direction inside the palm
 * plane; the base joint also abducts about the palm normal.
 *
 *   joint           flexion           abduction
 *   thumb base      [-0.40, 0.90]     [-0.50, 0.60]
 *   thumb middle    [ 0.00, 1.00]     -
 *   thumb distal    [ 0.00, 1.30]     -
 *   finger base     [-0.30, 1.50]     [-0.30, 0.30]
 *   finger middle   [ 0.00, 1.70]     -
 *   finger distal   [ 0.00, 1.30]     -
 *
 * Middle and distal flexion share one sign, so a sampled finger stays planar with a
 * consistent curl and has zero twist energy.
 */
struct JointLimits {
  double flex_lo;
  double flex_hi;
  double abduct_lo;
  double abduct_hi;
};
const std::array<JointLimits, kNumJoints>& pose_limits();

struct SynthConfig {
  std::uint64_t seed = 0;
  int sample_count = 100;
  /// Spread of sampled articulation angles; 0 gives the rest pose.
  double pose_sigma = 0.5;
  /// Spread of the global rotation angle around a random axis.
  double root_rotation_sigma = 0.3;
  double beta_sigma = 1.0;
  /// Per-joint random-axis rotation angle sigma applied to emulate a noisy initialization.
  double pose_noise_sigma = 0.1;
  double keypoint_noise_px = 0.0;
  /// Probability of replacing a keypoint by a uniform draw over the image.
  double outlier_prob = 0.0;
  std::array<double, 2> depth_range = {0.5, 0.8};
  /// Sigma of the root pixel around the image center (perspective) or around t (weak).
  double root_px_sigma = 30.0;
  CameraSpec camera = CameraSpec::perspective(600.0, 600.0, 320.0, 240.0);
  Eigen::Vector2i image_size{640, 480};
  std::uint64_t model_seed = 1;
  int model_vertex_budget = 512;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SyntheticCase {
  HandParams gt;
  CameraSpec camera;
  Observations obs_exact;
};

/// Deterministic in (cfg.seed, index); independent of every other index.
SyntheticCase sample_case(const SynthConfig& cfg, const HandModel& model, int index);

struct CorruptedCase {
  Observations obs_noisy;
  HandParams init;
};

/// Pixel noise (and optional outliers) on the keypoints, random-axis rotation noise
/// on every joint of the initialization.
CorruptedCase corrupt(const Observations& obs_exact, const HandParams& gt, const SynthConfig& cfg,
                      Rng& rng);

/// The corruption stream of case `index`.
Rng corruption_stream(const SynthConfig& cfg, int index);

/// Exact keypoints of `params` under `camera` (root-relative for weak cameras).
Keypoints render_keypoints(const HandModel& model, const HandParams& params, const CameraSpec& camera);

HandModel synth_model(const SynthConfig& cfg);

/*
 * Dataset layout:
 *   manifest.json              {"synth_config": {...}, "unit_to_mm": 1000, "cases": [ids]}
 *   camera.json                intrinsics, or {"mode": "weak", "s", "t"}
 *   case_00000.obs.json        noisy observations (keypoint schema)
 *   case_00000.gt.json         {"params": ..., "joints": 21x3, "keypoints_exact": 21x2}
 *   case_00000.init.json       {"params": ...} emulated predictor output
 */
/// Synthetic hands are built in meters.
inline constexpr double kSynthUnitToMm = 1000.0;

std::string case_id(int index);
void write_dataset(const SynthConfig& cfg, const std::filesystem::path& dir, int jobs = 1);

/// FNV-1a digest over the names and bytes of every regular file in `dir`, sorted by name.
std::string directory_digest(const std::filesystem::path& dir);

nlohmann::json camera_to_json(const CameraSpec& camera);
CameraSpec camera_from_json(const nlohmann::json& j);

} // namespace handfit
