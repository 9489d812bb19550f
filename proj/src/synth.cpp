#include "handfit/synth.hpp"
#include "handfit/energy.hpp"
#include "handfit/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <thread>
#include <vector>

namespace handfit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCaseStream = 0xca5e;
constexpr std::uint64_t kCorruptStream = 0xc0de;

// Mean of the sampled flexion in units of pose_sigma, per chain position.
constexpr std::array<double, 3> kFlexBias = {0.6, 0.8, 0.6};

double clamped(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

} // namespace

const std::array<JointLimits, kNumJoints>& pose_limits() {
  static const std::array<JointLimits, kNumJoints> limits = [] {
    std::array<JointLimits, kNumJoints> l{};
    l[0] = {0.0, 0.0, 0.0, 0.0};
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerChain c = finger_chain(f);
      if (f == 0) {
        l[c.base] = {-0.40, 0.90, -0.50, 0.60};
        l[c.middle] = {0.0, 1.00, 0.0, 0.0};
        l[c.distal] = {0.0, 1.30, 0.0, 0.0};
      } else {
        l[c.base] = {-0.30, 1.50, -0.30, 0.30};
        l[c.middle] = {0.0, 1.70, 0.0, 0.0};
        l[c.distal] = {0.0, 1.30, 0.0, 0.0};
      }
    }
    return l;
  }();
  return limits;
}

void SynthConfig::validate() const {
  if (sample_count < 0) {
    throw DataError("sample_count must be non-negative");
  }
  if (pose_sigma < 0 || root_rotation_sigma < 0 || beta_sigma < 0 || pose_noise_sigma < 0 ||
      keypoint_noise_px < 0 || root_px_sigma < 0) {
    throw DataError("synth sigmas must be non-negative");
  }
  if (!(outlier_prob >= 0 && outlier_prob <= 1)) {
    throw DataError("outlier_prob must lie in [0, 1]");
  }
  if (!(depth_range[0] > 0) || depth_range[1] < depth_range[0]) {
    throw DataError("depth_range must be positive and ordered");
  }
  if ((image_size.array() <= 0).any()) {
    throw DataError("image_size must be positive");
  }
  camera.validate();
}

json camera_to_json(const CameraSpec& camera) {
  if (camera.mode == ProjectionMode::perspective) {
    const Intrinsics& k = camera.intrinsics;
    return {{"mode", "perspective"}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
  }
  return {{"mode", "weak"}, {"s", camera.weak.s}, {"t", {camera.weak.t.x(), camera.weak.t.y()}}};
}

CameraSpec camera_from_json(const json& j) {
  try {
    CameraSpec cam;
    if (j.value("mode", "perspective") == "weak") {
      const auto t = j.at("t").get<std::vector<double>>();
      if (t.size() != 2) {
        throw DataError("weak camera: t must have two values");
      }
      cam = CameraSpec::weak_perspective(j.at("s").get<double>(), {t[0], t[1]});
    } else {
      cam = CameraSpec::perspective(j.at("fx").get<double>(), j.at("fy").get<double>(),
                                    j.at("cx").get<double>(), j.at("cy").get<double>());
    }
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw DataError(std::string("camera: ") + e.what());
  }
}

json synth_config_to_json(const SynthConfig& cfg) {
  return {{"seed", cfg.seed},
          {"sample_count", cfg.sample_count},
          {"pose_sigma", cfg.pose_sigma},
          {"root_rotation_sigma", cfg.root_rotation_sigma},
          {"beta_sigma", cfg.beta_sigma},
          {"pose_noise_sigma", cfg.pose_noise_sigma},
          {"keypoint_noise_px", cfg.keypoint_noise_px},
          {"outlier_prob", cfg.outlier_prob},
          {"depth_range", cfg.depth_range},
          {"root_px_sigma", cfg.root_px_sigma},
          {"camera", camera_to_json(cfg.camera)},
          {"image_size", {cfg.image_size.x(), cfg.image_size.y()}},
          {"model", {{"seed", cfg.model_seed}, {"vertex_budget", cfg.model_vertex_budget}}}};
}

SynthConfig synth_config_from_json(const json& j) {
  try {
    SynthConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.sample_count = j.value("sample_count", cfg.sample_count);
    cfg.pose_sigma = j.value("pose_sigma", cfg.pose_sigma);
    cfg.root_rotation_sigma = j.value("root_rotation_sigma", cfg.root_rotation_sigma);
    cfg.beta_sigma = j.value("beta_sigma", cfg.beta_sigma);
    cfg.pose_noise_sigma = j.value("pose_noise_sigma", cfg.pose_noise_sigma);
    cfg.keypoint_noise_px = j.value("keypoint_noise_px", cfg.keypoint_noise_px);
    cfg.outlier_prob = j.value("outlier_prob", cfg.outlier_prob);
    if (j.contains("depth_range")) {
      const auto range = j.at("depth_range").get<std::vector<double>>();
      if (range.size() != 2) {
        throw DataError("depth_range must be [min, max]");
      }
      cfg.depth_range = {range[0], range[1]};
    }
    cfg.root_px_sigma = j.value("root_px_sigma", cfg.root_px_sigma);
    if (j.contains("camera")) {
      cfg.camera = camera_from_json(j.at("camera"));
    }
    if (j.contains("image_size")) {
      const auto size = j.at("image_size").get<std::vector<int>>();
      if (size.size() != 2) {
        throw DataError("image_size must be [W, H]");
      }
      cfg.image_size = {size[0], size[1]};
    }
    if (j.contains("model")) {
      cfg.model_seed = j.at("model").value("seed", cfg.model_seed);
      cfg.model_vertex_budget = j.at("model").value("vertex_budget", cfg.model_vertex_budget);
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
}

HandModel synth_model(const SynthConfig& cfg) {
  return make_toy_model(cfg.model_seed, cfg.model_vertex_budget);
}

Keypoints render_keypoints(const HandModel& model, const HandParams& params, const CameraSpec& camera) {
  const Joints joints = root_relative_keypoints(model, params);
  Keypoints out;
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector3d q = joints.row(i).transpose();
    if (camera.mode == ProjectionMode::weak) {
      out.row(i) = project_weak<double>(camera.weak, q).transpose();
    } else {
      const Eigen::Vector3d p = q + params.root;
      if (!(p.z() > 0)) {
        throw BehindCameraError(i, p.z());
      }
      out.row(i) = project_persp<double>(camera.intrinsics, p).transpose();
    }
  }
  return out;
}

SyntheticCase sample_case(const SynthConfig& cfg, const HandModel& model, int index) {
  if (index < 0 || index >= cfg.sample_count) {
    throw DataError("case index out of range");
  }
  Rng rng(cfg.seed, kCaseStream, static_cast<std::uint64_t>(index));
  const SkeletonJoints rest = rest_joints(model, ShapeVector::Zero());
  const Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  const auto& limits = pose_limits();

  SyntheticCase out;
  out.camera = cfg.camera;
  HandParams gt;
  for (int attempt = 0;; ++attempt) {
    gt = HandParams();
    for (int f = 0; f < kNumFingers; ++f) {
      const FingerChain c = finger_chain(f);
      const Eigen::Vector3d dir = (rest.row(c.middle) - rest.row(c.base)).transpose().normalized();
      const Eigen::Vector3d flex_axis = normal.cross(dir).normalized();
      const std::array<int, 3> chain = {c.base, c.middle, c.distal};
      for (int s = 0; s < 3; ++s) {
        const JointLimits& lim = limits[chain[s]];
        const double flex = clamped(cfg.pose_sigma * (kFlexBias[s] + rng.normal()), lim.flex_lo, lim.flex_hi);
        Eigen::Quaterniond q(Eigen::AngleAxisd(flex, flex_axis));
        if (s == 0) {
          const double abduct = clamped(cfg.pose_sigma * 0.5 * rng.normal(), lim.abduct_lo, lim.abduct_hi);
          q = Eigen::Quaterniond(Eigen::AngleAxisd(abduct, normal)) * q;
        }
        gt.theta[chain[s]] = q;
      }
    }
    const double root_angle = cfg.root_rotation_sigma * rng.normal();
    gt.theta[0] = Eigen::Quaterniond(Eigen::AngleAxisd(root_angle, rng.unit_vector()));
    for (int b = 0; b < kNumShape; ++b) {
      gt.beta(b) = cfg.beta_sigma * rng.normal();
    }
    if (e_twist(posed_keypoints(model, gt)) <= 1e-12 || attempt >= 100) {
      break;
    }
  }

  const double depth = rng.uniform(cfg.depth_range[0], cfg.depth_range[1]);
  const Eigen::Vector2d jitter(cfg.root_px_sigma * rng.normal(), cfg.root_px_sigma * rng.normal());
  Observations obs;
  obs.image_size = cfg.image_size;
  if (cfg.camera.mode == ProjectionMode::perspective) {
    const Intrinsics& k = cfg.camera.intrinsics;
    const Eigen::Vector3d uvd(k.cx + jitter.x(), k.cy + jitter.y(), 0.0);
    gt.root = unproject_persp<double>(k, uvd, depth);
    obs.d_root = gt.root.z();
  } else {
    out.camera.weak.t += jitter;
  }
  obs.keypoints = render_keypoints(model, gt, out.camera);
  out.gt = gt;
  out.obs_exact = obs;
  return out;
}

Rng corruption_stream(const SynthConfig& cfg, int index) {
  return Rng(cfg.seed, kCorruptStream, static_cast<std::uint64_t>(index));
}

CorruptedCase corrupt(const Observations& obs_exact, const HandParams& gt, const SynthConfig& cfg, Rng& rng) {
  CorruptedCase out{obs_exact, gt};
  for (int i = 0; i < kNumKeypoints; ++i) {
    const double nu = rng.normal(), nv = rng.normal();
    const double outlier = rng.uniform();
    const double ou = rng.uniform(), ov = rng.uniform();
    if (cfg.outlier_prob > 0 && outlier < cfg.outlier_prob) {
      out.obs_noisy.keypoints(i, 0) = ou * cfg.image_size.x();
      out.obs_noisy.keypoints(i, 1) = ov * cfg.image_size.y();
    } else {
      out.obs_noisy.keypoints(i, 0) += cfg.keypoint_noise_px * nu;
      out.obs_noisy.keypoints(i, 1) += cfg.keypoint_noise_px * nv;
    }
  }
  for (int k = 0; k < kNumJoints; ++k) {
    const Eigen::Vector3d axis = rng.unit_vector();
    const double angle = cfg.pose_noise_sigma * rng.normal();
    out.init.theta[k] = (gt.theta[k] * Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis))).normalized();
  }
  if (cfg.pose_noise_sigma == 0.0) {
    out.init.theta = gt.theta;
  }
  return out;
}

std::string case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%05d", index);
  return buf;
}

void write_dataset(const SynthConfig& cfg, const std::filesystem::path& dir, int jobs) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  const HandModel model = synth_model(cfg);

  json ids = json::array();
  for (int i = 0; i < cfg.sample_count; ++i) {
    ids.push_back(case_id(i));
  }
  write_json_file({{"synth_config", synth_config_to_json(cfg)}, {"unit_to_mm", kSynthUnitToMm}, {"cases", ids}},
                  dir / "manifest.json");
  write_json_file(camera_to_json(cfg.camera), dir / "camera.json");

  auto write_case = [&](int i) {
    const SyntheticCase c = sample_case(cfg, model, i);
    Rng rng = corruption_stream(cfg, i);
    const CorruptedCase noisy = corrupt(c.obs_exact, c.gt, cfg, rng);
    const std::string id = case_id(i);
    save_observations(noisy.obs_noisy, dir / (id + ".obs.json"));
    const Joints joints = regress_joints(model, skin(model, c.gt));
    json joints_json = json::array();
    for (int r = 0; r < kNumKeypoints; ++r) {
      joints_json.push_back({joints(r, 0), joints(r, 1), joints(r, 2)});
    }
    json kps_json = json::array();
    for (int r = 0; r < kNumKeypoints; ++r) {
      kps_json.push_back({c.obs_exact.keypoints(r, 0), c.obs_exact.keypoints(r, 1)});
    }
    write_json_file({{"params", params_to_json(c.gt)},
                     {"joints", std::move(joints_json)},
                     {"keypoints_exact", std::move(kps_json)}},
                    dir / (id + ".gt.json"));
    write_json_file({{"params", params_to_json(noisy.init)}}, dir / (id + ".init.json"));
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (int i = 0; i < cfg.sample_count; ++i) {
      write_case(i);
    }
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = w; i < cfg.sample_count; i += jobs) {
          write_case(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) {
    t.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char byte) {
    hash ^= byte;
    hash *= 0x100000001b3ULL;
  };
  for (const auto& file : files) {
    for (char ch : file.filename().string()) {
      mix(static_cast<unsigned char>(ch));
    }
    mix(0);
    std::ifstream in(file, std::ios::binary);
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
      mix(static_cast<unsigned char>(*it));
    }
    mix(0);
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

} // namespace handfit
