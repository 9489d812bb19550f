#include "handfit/tailor.hpp"
#include "handfit/model_io.hpp"

#include <chrono>
#include <cmath>

namespace handfit {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

ParamVector renormalized(ParamVector x) {
  for (int k = 0; k < kNumJoints; ++k) {
    x.segment<4>(4 * k).normalize();
  }
  return x;
}

} // namespace

void FitConfig::validate() const {
  if (iterations < 1) {
    throw DataError("iterations must be at least 1");
  }
  if (!(adam.learning_rate > 0)) {
    throw DataError("learning rate must be positive");
  }
  weights.validate();
}

Eigen::Vector3d root_from_observations(const Intrinsics& intrinsics, const Observations& obs) {
  if (!obs.d_root) {
    throw DataError("perspective fitting needs d_root in the observations");
  }
  const Eigen::Vector3d uvd(obs.keypoints(0, 0), obs.keypoints(0, 1), 0.0);
  return unproject_persp<double>(intrinsics, uvd, *obs.d_root);
}

Reprojection solve_scale(const HandModel& model,
                         const HandParams& init,
                         const Observations& obs,
                         const CameraSpec& camera,
                         ProjectionMode mode) {
  const Joints joints = root_relative_keypoints(model, init);
  const Eigen::Vector2d root_px = obs.keypoints.row(0).transpose();
  Reprojection reprojection;
  if (mode == ProjectionMode::perspective) {
    if (camera.mode != ProjectionMode::perspective) {
      throw DataError("perspective fitting needs camera intrinsics");
    }
    camera.validate();
    const Eigen::Vector3d p_root = root_from_observations(camera.intrinsics, obs);
    const double s = persp_scale_analytic(camera.intrinsics, joints, obs.keypoints, root_px, p_root.z());
    if (!(s > 0) || !std::isfinite(s)) {
      throw DegenerateError("analytic scale is not positive (" + std::to_string(s) + ")");
    }
    reprojection.camera = camera;
    reprojection.scale = s;
    reprojection.root = p_root;
  } else {
    const WeakCamera weak = weak_s_t_from_keypoints(joints, obs.keypoints, root_px);
    if (!(weak.s > 0) || !std::isfinite(weak.s)) {
      throw DegenerateError("weak scale is not positive (" + std::to_string(weak.s) + ")");
    }
    reprojection.camera = CameraSpec::weak_perspective(weak.s, weak.t);
  }
  return reprojection;
}

FitResult tailor_fit(const HandModel& model,
                     const HandParams& init,
                     const Observations& obs,
                     const CameraSpec& camera,
                     const FitConfig& config) {
  const auto start = Clock::now();
  config.validate();
  init.validate();
  obs.validate();

  FitResult result;
  result.reprojection = solve_scale(model, init, obs, camera, config.mode);
  result.camera = result.reprojection.camera;
  result.s_star = config.mode == ProjectionMode::perspective ? result.reprojection.scale
                                                             : result.reprojection.camera.weak.s;
  const auto scaled = Clock::now();

  const TailorEnergy energy(model, init, obs.keypoints, obs.confidences, result.reprojection,
                            config.weights, config.normalization);

  AdamState state(init.flat());
  EnergyReport current = energy.evaluate(ParamVector(state.x));
  result.energy_trace.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    if (config.early_stop_grad_norm && current.gradient.norm() < *config.early_stop_grad_norm) {
      break;
    }
    result.energy_trace.push_back(current.total);
    const ParamVector before = state.x;
    state = adam_step(std::move(state), current.gradient, config.adam);
    ParamVector step = ParamVector(state.x) - before;
    for (int attempt = 0;; ++attempt) {
      ParamVector candidate = before + step;
      if (config.renormalize_quaternions) {
        candidate = renormalized(candidate);
      }
      try {
        current = energy.evaluate(candidate);
        state.x = candidate;
        break;
      } catch (const BehindCameraError&) {
        if (attempt == 1) {
          throw;
        }
        step *= 0.5;
      }
    }
    ++result.iterations_run;
  }
  result.final_energy = current.total;
  result.final_terms = current.terms;
  result.params = HandParams::from_flat(ParamVector(state.x), result.reprojection.root);

  const auto done = Clock::now();
  result.timing.scale_ms = elapsed_ms(start, scaled);
  result.timing.iterate_ms = elapsed_ms(scaled, done);
  result.timing.total_ms = elapsed_ms(start, done);
  result.timing.per_iteration_ms =
      result.iterations_run > 0 ? result.timing.iterate_ms / result.iterations_run : 0.0;
  return result;
}

Mesh fitted_mesh(const HandModel& model, const FitResult& result) {
  HandParams params = result.params;
  params.normalize();
  params.root.setZero();
  Mesh mesh = skin(model, params);
  if (result.reprojection.camera.mode == ProjectionMode::perspective) {
    mesh.vertices *= result.reprojection.scale;
    mesh.vertices.rowwise() += result.reprojection.root.transpose();
  }
  return mesh;
}

Keypoints fitted_keypoints(const HandModel& model, const FitResult& result) {
  const Joints joints = root_relative_keypoints(model, result.params);
  Keypoints out;
  for (int i = 0; i < kNumKeypoints; ++i) {
    out.row(i) = result.reprojection.pixel(joints.row(i).transpose(), i).transpose();
  }
  return out;
}

double mean_pixel_error(const Keypoints& a, const Keypoints& b) {
  return (a - b).rowwise().norm().mean();
}

nlohmann::json fit_report_json(const FitResult& result, bool include_timing) {
  nlohmann::json j;
  j["mode"] = result.camera.mode == ProjectionMode::perspective ? "perspective" : "weak";
  j["s_star"] = result.s_star;
  if (result.camera.mode == ProjectionMode::weak) {
    j["weak_t"] = {result.camera.weak.t.x(), result.camera.weak.t.y()};
  } else {
    j["p_root"] = {result.reprojection.root.x(), result.reprojection.root.y(),
                   result.reprojection.root.z()};
  }
  j["params"] = params_to_json(result.params);
  j["energy_trace"] = result.energy_trace;
  j["final_energy"] = result.final_energy;
  j["final_terms"] = {{"joint", result.final_terms.joint},
                      {"twist", result.final_terms.twist},
                      {"identity", result.final_terms.identity}};
  j["iterations_run"] = result.iterations_run;
  if (include_timing) {
    j["timing"] = {{"scale_ms", result.timing.scale_ms},
                   {"iterate_ms", result.timing.iterate_ms},
                   {"per_iteration_ms", result.timing.per_iteration_ms},
                   {"total_ms", result.timing.total_ms}};
  }
  return j;
}

} // namespace handfit
