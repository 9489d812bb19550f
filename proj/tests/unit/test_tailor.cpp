#include "handfit/adam.hpp"
#include "handfit/synth.hpp"
#include "handfit/tailor.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace handfit;

namespace {

SynthConfig shallow(std::uint64_t seed, int count) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.sample_count = count;
  cfg.camera = CameraSpec::perspective(2400.0, 2400.0, 320.0, 240.0);
  cfg.depth_range = {2.0, 3.2};
  return cfg;
}

const HandModel& toy() {
  static const HandModel model = make_toy_model(1, 512);
  return model;
}

} // namespace

TEST_CASE("adam step") {
  const AdamConfig cfg;
  SUBCASE("zero gradient leaves parameters alone") {
    const Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(5, -1, 1);
    const AdamState s = adam_step(AdamState(x0), Eigen::VectorXd::Zero(5), cfg);
    CHECK(s.x == x0);
    CHECK(s.step == 1);
  }
  SUBCASE("first step closed form") {
    Eigen::VectorXd g(4);
    g << 0.5, -2.0, 1e-3, 7.0;
    const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(4);
    const AdamState s = adam_step(AdamState(x0), g, cfg);
    for (int i = 0; i < 4; ++i) {
      // Bias-corrected moments after one step are g and g^2.
      const double expected = x0(i) - cfg.learning_rate * g(i) / (std::abs(g(i)) + cfg.epsilon);
      CHECK(s.x(i) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  SUBCASE("second step matches hand-computed moments") {
    Eigen::VectorXd g1(1), g2(1);
    g1 << 0.4;
    g2 << -0.1;
    AdamState s = adam_step(AdamState(Eigen::VectorXd::Zero(1)), g1, cfg);
    const double x1 = s.x(0);
    s = adam_step(s, g2, cfg);
    const double m = (cfg.beta1 * (1 - cfg.beta1) * 0.4 + (1 - cfg.beta1) * -0.1) / (1 - cfg.beta1 * cfg.beta1);
    const double v =
        (cfg.beta2 * (1 - cfg.beta2) * 0.16 + (1 - cfg.beta2) * 0.01) / (1 - cfg.beta2 * cfg.beta2);
    CHECK(s.x(0) == doctest::Approx(x1 - cfg.learning_rate * m / (std::sqrt(v) + cfg.epsilon)).epsilon(1e-13));
  }
  SUBCASE("equal gradients give equal updates") {
    AdamState s(Eigen::VectorXd::Zero(3));
    for (int i = 0; i < 5; ++i) {
      s = adam_step(s, Eigen::VectorXd::Constant(3, 0.7), cfg);
    }
    CHECK(s.x(0) == s.x(1));
    CHECK(s.x(1) == s.x(2));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(adam_step(AdamState(Eigen::VectorXd::Zero(3)), Eigen::VectorXd::Zero(2), cfg), DataError);
  }
}

TEST_CASE("tailor fit") {
  const SynthConfig cfg = shallow(3, 40);
  const HandModel model = synth_model(cfg);
  const FitConfig fit;

  SUBCASE("ground truth with exact keypoints") {
    // Weak projection data is reproduced exactly by the fitted (s, t), so the
    // reprojection residual vanishes at the ground truth for any pose. So does a
    // perspective view of a hand whose joints share the root depth.
    SynthConfig weak_cfg = cfg;
    weak_cfg.camera = CameraSpec::weak_perspective(2500.0, Eigen::Vector2d(320.0, 240.0));
    FitConfig weak_fit = fit;
    weak_fit.mode = ProjectionMode::weak;
    struct Run {
      HandParams gt;
      Observations obs;
      CameraSpec camera;
      FitConfig config;
    };
    std::vector<Run> runs;
    for (int i = 0; i < 10; ++i) {
      const SyntheticCase c = sample_case(weak_cfg, model, i);
      runs.push_back({c.gt, c.obs_exact, c.camera, weak_fit});
    }
    HandParams flat;
    flat.root = Eigen::Vector3d(0.01, -0.02, 2.5);
    REQUIRE(root_relative_keypoints(model, flat).col(2).cwiseAbs().maxCoeff() <= 1e-12);
    Observations flat_obs;
    flat_obs.keypoints = render_keypoints(model, flat, cfg.camera);
    flat_obs.d_root = flat.root.z();
    runs.push_back({flat, flat_obs, cfg.camera, fit});

    // Adam gives every coordinate a step of about lr once the gradient leaves
    // round-off level, so plain iterations wander by at most lr per coordinate per step.
    const double adam_bound = fit.iterations * fit.adam.learning_rate * std::sqrt(double(kNumParams));
    for (Run& run : runs) {
      const FitResult plain = tailor_fit(model, run.gt, run.obs, run.camera, run.config);
      CHECK(plain.energy_trace.front() <= 1e-12);
      CHECK((plain.params.flat() - run.gt.flat()).norm() <= adam_bound);

      run.config.early_stop_grad_norm = 1e-8;
      const FitResult stopped = tailor_fit(model, run.gt, run.obs, run.camera, run.config);
      CHECK(stopped.iterations_run == 0);
      CHECK((stopped.params.flat() - run.gt.flat()).norm() <= 1e-3);
    }
    CHECK(tailor_fit(model, flat, flat_obs, cfg.camera, fit).s_star == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("noisy initialization improves the 2D fit") {
    int improved = 0;
    for (int i = 0; i < 20; ++i) {
      const SyntheticCase c = sample_case(cfg, model, i);
      Rng rng = corruption_stream(cfg, i);
      const CorruptedCase noisy = corrupt(c.obs_exact, c.gt, cfg, rng);
      const FitResult r = tailor_fit(model, noisy.init, c.obs_exact, c.camera, fit);
      CHECK(r.iterations_run == fit.iterations);
      CHECK(r.energy_trace.size() == static_cast<std::size_t>(fit.iterations));
      CHECK(r.s_star > 0.0);
      CHECK(r.final_energy <= r.energy_trace.front());
      CHECK(r.params.root == r.reprojection.root);
      for (const auto& q : r.params.theta) {
        CHECK(std::abs(q.norm() - 1.0) <= 1e-12);
      }

      FitResult start = r;
      start.params = noisy.init;
      start.params.root = r.reprojection.root;
      const double before = mean_pixel_error(fitted_keypoints(model, start), c.obs_exact.keypoints);
      const double after = mean_pixel_error(fitted_keypoints(model, r), c.obs_exact.keypoints);
      improved += after < before ? 1 : 0;
    }
    CHECK(improved == 20);
  }

  SUBCASE("deterministic") {
    const SyntheticCase c = sample_case(cfg, model, 5);
    Rng rng = corruption_stream(cfg, 5);
    const CorruptedCase noisy = corrupt(c.obs_exact, c.gt, cfg, rng);
    const FitResult a = tailor_fit(model, noisy.init, noisy.obs_noisy, c.camera, fit);
    const FitResult b = tailor_fit(model, noisy.init, noisy.obs_noisy, c.camera, fit);
    CHECK(fit_report_json(a, false).dump() == fit_report_json(b, false).dump());
  }

  SUBCASE("scale equals the closed-form solvers") {
    const SyntheticCase c = sample_case(cfg, model, 7);
    const Joints rel = root_relative_keypoints(model, c.gt);
    const FitResult r = tailor_fit(model, c.gt, c.obs_exact, c.camera, fit);
    const Eigen::Vector3d p_root = root_from_observations(c.camera.intrinsics, c.obs_exact);
    CHECK(r.s_star == persp_scale_analytic(c.camera.intrinsics, rel, c.obs_exact.keypoints,
                                           c.obs_exact.keypoints.row(0).transpose(), p_root.z()));

    FitConfig weak = fit;
    weak.mode = ProjectionMode::weak;
    const FitResult w = tailor_fit(model, c.gt, c.obs_exact, c.camera, weak);
    const WeakCamera expected = weak_s_t_from_keypoints(rel, c.obs_exact.keypoints,
                                                        c.obs_exact.keypoints.row(0).transpose());
    CHECK(w.s_star == expected.s);
    CHECK(w.camera.weak.t == expected.t);
    CHECK(w.params.root.isZero(0.0));
  }

  SUBCASE("report contents") {
    const SyntheticCase c = sample_case(cfg, model, 1);
    const FitResult r = tailor_fit(model, c.gt, c.obs_exact, c.camera, fit);
    const nlohmann::json with = fit_report_json(r);
    const nlohmann::json without = fit_report_json(r, false);
    CHECK(with.contains("timing"));
    CHECK_FALSE(without.contains("timing"));
    CHECK(without["s_star"].get<double>() == r.s_star);
    CHECK(without["energy_trace"].size() == r.energy_trace.size());
    CHECK(without["final_energy"].get<double>() == r.final_energy);
    CHECK(without["mode"] == "perspective");
  }

  SUBCASE("fitted mesh sits at the observed root") {
    const SyntheticCase c = sample_case(cfg, model, 4);
    const FitResult r = tailor_fit(model, c.gt, c.obs_exact, c.camera, fit);
    const Joints j = regress_joints(model, fitted_mesh(model, r));
    CHECK((j.row(0).transpose() - r.reprojection.root).norm() <= 1e-12);
    const Eigen::Vector2d px = project_persp(c.camera.intrinsics, Eigen::Vector3d(j.row(0).transpose()));
    CHECK((px - c.obs_exact.keypoints.row(0).transpose()).norm() <= 1e-9);
  }
}

TEST_CASE("tailor fit errors") {
  const SynthConfig cfg = shallow(4, 4);
  const HandModel model = synth_model(cfg);
  const SyntheticCase c = sample_case(cfg, model, 0);
  FitConfig fit;

  SUBCASE("missing root depth") {
    Observations obs = c.obs_exact;
    obs.d_root.reset();
    CHECK_THROWS_AS(tailor_fit(model, c.gt, obs, c.camera, fit), DataError);
  }
  SUBCASE("weak camera passed to a perspective fit") {
    CHECK_THROWS_AS(
        tailor_fit(model, c.gt, c.obs_exact, CameraSpec::weak_perspective(1, Eigen::Vector2d::Zero()), fit),
        DataError);
  }
  SUBCASE("bad configuration") {
    fit.iterations = 0;
    CHECK_THROWS_AS(tailor_fit(model, c.gt, c.obs_exact, c.camera, fit), DataError);
    fit.iterations = 5;
    fit.adam.learning_rate = -1;
    CHECK_THROWS_AS(tailor_fit(model, c.gt, c.obs_exact, c.camera, fit), DataError);
  }
  SUBCASE("all keypoints on the root") {
    Observations obs = c.obs_exact;
    for (int i = 0; i < kNumKeypoints; ++i) {
      obs.keypoints.row(i) = obs.keypoints.row(0);
    }
    CHECK_THROWS_AS(tailor_fit(model, c.gt, obs, c.camera, fit), DegenerateError);
    fit.mode = ProjectionMode::weak;
    CHECK_THROWS_AS(tailor_fit(model, c.gt, obs, c.camera, fit), DegenerateError);
  }
  SUBCASE("non-unit initialization") {
    HandParams bad = c.gt;
    bad.theta[2].coeffs() *= 2.0;
    CHECK_THROWS_AS(tailor_fit(model, bad, c.obs_exact, c.camera, fit), DataError);
  }
}

TEST_CASE("mean pixel error") {
  Keypoints a = Keypoints::Zero(), b = Keypoints::Zero();
  b.row(3) << 3, 4;
  CHECK(mean_pixel_error(a, b) == doctest::Approx(5.0 / 21.0));
  CHECK(mean_pixel_error(a, a) == 0.0);
}
