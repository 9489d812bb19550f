#include "handfit/cli.hpp"
#include "handfit/model_io.hpp"
#include "handfit/synth.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

using namespace handfit;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

bool single_line(const std::string& s) {
  return !s.empty() && std::count(s.begin(), s.end(), '\n') == 1 && s.back() == '\n';
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k, v;
  while (in >> k >> v) {
    if (k == key) {
      return v;
    }
  }
  return "";
}

SynthConfig small_config(int count) {
  SynthConfig cfg;
  cfg.seed = 17;
  cfg.sample_count = count;
  cfg.camera = CameraSpec::perspective(2400.0, 2400.0, 320.0, 240.0);
  cfg.depth_range = {2.0, 3.2};
  return cfg;
}

// Exact keypoints of one synthetic case plus its camera, written as CLI inputs.
struct FitInputs {
  std::filesystem::path keypoints;
  std::filesystem::path camera;
  std::filesystem::path init;
  std::filesystem::path model;
};

FitInputs write_fit_inputs(const fixture::TempDir& dir) {
  const SynthConfig cfg = small_config(1);
  const HandModel model = synth_model(cfg);
  const SyntheticCase c = sample_case(cfg, model, 0);
  Rng rng = corruption_stream(cfg, 0);
  const CorruptedCase noisy = corrupt(c.obs_exact, c.gt, cfg, rng);
  FitInputs in{dir / "kps.json", dir / "cam.json", dir / "init.json", dir / "model.json"};
  save_observations(c.obs_exact, in.keypoints);
  save_intrinsics(c.camera.intrinsics, in.camera);
  write_json_file(params_to_json(noisy.init), in.init);
  save_model(model, in.model);
  return in;
}

} // namespace

TEST_CASE("usage errors") {
  Run r = run({});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));

  r = run({"frobnicate"});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));

  r = run({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("fit") != std::string::npos);

  fixture::TempDir dir("cli_usage");
  const FitInputs in = write_fit_inputs(dir);
  r = run({"fit", "--keypoints", in.keypoints.string()});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));
  CHECK(r.err.rfind("usage error:", 0) == 0);

  r = run({"fit", "--keypoints", in.keypoints.string(), "--weak", "--camera", in.camera.string()});
  CHECK(r.code == kExitUsage);

  r = run({"fit", "--keypoints", (dir / "missing.json").string(), "--weak"});
  CHECK(r.code == kExitUsage);

  r = run({"synth", "--out-dir", (dir / "ds").string()});
  CHECK(r.code == kExitUsage);
  CHECK(single_line(r.err));

  r = run({"eval", "--pred-dir", dir.path().string(), "--gt-dir", dir.path().string(), "--metrics", "bogus"});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("fit") {
  fixture::TempDir dir("cli_fit");
  const FitInputs in = write_fit_inputs(dir);
  const std::vector<std::string> base{"fit",     "--keypoints", in.keypoints.string(), "--camera",
                                      in.camera.string(), "--init", in.init.string(), "--model",
                                      in.model.string()};

  SUBCASE("perspective fit writes mesh and report") {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--out-mesh", (dir / "m.obj").string(), "--report", (dir / "r.json").string()});
    const Run r = run(args);
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.empty());
    CHECK(std::stod(value_of(r.out, "s_star")) > 0.0);
    CHECK_FALSE(value_of(r.out, "final_energy").empty());
    CHECK_FALSE(value_of(r.out, "elapsed_ms").empty());
    const json report = read_json_file(dir / "r.json");
    const auto trace = report.at("energy_trace").get<std::vector<double>>();
    REQUIRE(trace.size() == 20);
    CHECK(report.at("final_energy").get<double>() < trace.front());
    CHECK(report.contains("timing"));
    CHECK(report.at("keypoints").size() == kNumKeypoints);
    const std::string obj = fixture::read_file(dir / "m.obj");
    CHECK(obj.rfind("v ", 0) == 0);
    CHECK(obj.find("\nf ") != std::string::npos);
  }

  SUBCASE("weak fit needs no camera") {
    const Run r = run({"fit", "--keypoints", in.keypoints.string(), "--weak", "--init", in.init.string(),
                       "--model", in.model.string(), "--report", (dir / "w.json").string()});
    REQUIRE(r.code == kExitOk);
    const json report = read_json_file(dir / "w.json");
    CHECK(report.at("mode") == "weak");
    CHECK(report.at("s_star").get<double>() > 0.0);
    CHECK(std::stod(value_of(r.out, "s_star")) == doctest::Approx(report.at("s_star").get<double>()));
  }

  SUBCASE("reports without timing are reproducible") {
    std::vector<std::string> a = base, b = base;
    a.insert(a.end(), {"--no-timing", "--report", (dir / "a.json").string(), "--iters", "7"});
    b.insert(b.end(), {"--no-timing", "--report", (dir / "b.json").string(), "--iters", "7"});
    REQUIRE(run(a).code == kExitOk);
    REQUIRE(run(b).code == kExitOk);
    CHECK(fixture::read_file(dir / "a.json") == fixture::read_file(dir / "b.json"));
    const json report = read_json_file(dir / "a.json");
    CHECK_FALSE(report.contains("timing"));
    CHECK(report.at("iterations_run") == 7);
  }

  SUBCASE("corrupt keypoint file is a data error") {
    fixture::write_file(dir / "bad.json", "{\"keypoints\": [[1, 2]]}");
    const Run r = run({"fit", "--keypoints", (dir / "bad.json").string(), "--weak"});
    CHECK(r.code == kExitData);
    CHECK(single_line(r.err));
    CHECK(r.err.rfind("data error:", 0) == 0);
  }

  SUBCASE("collapsed keypoints are a numerical failure") {
    Observations obs;
    obs.keypoints.setConstant(100.0);
    obs.d_root = 2.5;
    save_observations(obs, dir / "flat.json");
    for (const bool weak : {false, true}) {
      std::vector<std::string> args{"fit", "--keypoints", (dir / "flat.json").string(), "--model", in.model.string()};
      if (weak) {
        args.push_back("--weak");
      } else {
        args.insert(args.end(), {"--camera", in.camera.string()});
      }
      const Run r = run(args);
      CHECK(r.code == kExitNumerical);
      CHECK(single_line(r.err));
      CHECK(r.err.rfind("numerical failure:", 0) == 0);
    }
  }

  SUBCASE("model from the environment") {
    REQUIRE(::setenv(kModelEnv, (dir / "nowhere.json").c_str(), 1) == 0);
    Run r = run({"fit", "--keypoints", in.keypoints.string(), "--weak"});
    CHECK(r.code == kExitData);
    REQUIRE(::setenv(kModelEnv, in.model.c_str(), 1) == 0);
    r = run({"fit", "--keypoints", in.keypoints.string(), "--weak"});
    CHECK(r.code == kExitOk);
    ::unsetenv(kModelEnv);
  }
}

TEST_CASE("export-model") {
  fixture::TempDir dir("cli_export");
  Run r = run({"export-model", "--out", (dir / "m.json").string(), "--mesh", (dir / "m.obj").string(), "--budget",
               "300", "--seed", "4"});
  REQUIRE(r.code == kExitOk);
  const HandModel m = load_model(dir / "m.json");
  CHECK(m.num_vertices() <= 300);
  CHECK(model_to_json(m).dump() == model_to_json(make_toy_model(4, 300)).dump());
  CHECK(std::filesystem::exists(dir / "m.obj"));

  r = run({"export-model", "--out", (dir / "l.json").string(), "--left"});
  REQUIRE(r.code == kExitOk);
  CHECK(load_model(dir / "l.json").side() == HandSide::left);

  r = run({"export-model", "--out", (dir / "tiny.json").string(), "--budget", "10"});
  CHECK(r.code == kExitData);
}

TEST_CASE("synth, fit-dataset and eval") {
  fixture::TempDir dir("cli_pipeline");
  write_json_file(synth_config_to_json(small_config(6)), dir / "cfg.json");

  const Run s1 = run({"synth", "--config", (dir / "cfg.json").string(), "--out-dir", (dir / "ds1").string()});
  REQUIRE(s1.code == kExitOk);
  CHECK(value_of(s1.out, "cases") == "6");
  const Run s2 = run({"synth", "--config", (dir / "ds1" / "manifest.json").string(), "--out-dir",
                      (dir / "ds2").string(), "--jobs", "3"});
  REQUIRE(s2.code == kExitOk);
  CHECK(value_of(s1.out, "digest") == value_of(s2.out, "digest"));
  const Run s3 = run({"synth", "--config", (dir / "cfg.json").string(), "--out-dir", (dir / "ds3").string(),
                      "--seed", "18"});
  REQUIRE(s3.code == kExitOk);
  CHECK(value_of(s1.out, "digest") != value_of(s3.out, "digest"));

  json no_seed = synth_config_to_json(small_config(2));
  no_seed.erase("seed");
  write_json_file(no_seed, dir / "noseed.json");
  CHECK(run({"synth", "--config", (dir / "noseed.json").string(), "--out-dir", (dir / "x").string()}).code ==
        kExitUsage);

  SUBCASE("ground truth scored against itself is perfect") {
    const Run e = run({"eval", "--pred-dir", (dir / "ds1").string(), "--gt-dir", (dir / "ds1").string(),
                       "--metrics", "pa-mpjpe,pa-mpvpe,pck,auc"});
    // Ground-truth files double as predictions through their params.
    CHECK(e.code == kExitData);
    for (int i = 0; i < 6; ++i) {
      std::filesystem::copy_file(dir / "ds1" / (case_id(i) + ".gt.json"), dir / "ds1" / (case_id(i) + ".pred.json"));
    }
    const Run ok = run({"eval", "--pred-dir", (dir / "ds1").string(), "--gt-dir", (dir / "ds1").string(),
                        "--metrics", "pa-mpjpe,pa-mpvpe,pck,auc", "--out", (dir / "m.json").string()});
    REQUIRE(ok.code == kExitOk);
    const json rows = read_json_file(dir / "m.json");
    for (const auto& row : rows) {
      const std::string metric = row.at("metric");
      const double value = row.at("value");
      CAPTURE(metric);
      if (metric == "pa_mpjpe_mm" || metric == "pa_mpvpe_mm") {
        CHECK(value <= 1e-6);
      } else {
        CHECK(value == doctest::Approx(1.0).epsilon(1e-12));
      }
      CHECK(row.at("samples") == 6);
    }
    CHECK(ok.out.rfind("metric,range,value,samples,steps\n", 0) == 0);
  }

  SUBCASE("fitted predictions are deterministic and scored") {
    REQUIRE(run({"fit-dataset", "--data-dir", (dir / "ds1").string(), "--out-dir", (dir / "p1").string()}).code ==
            kExitOk);
    REQUIRE(run({"fit-dataset", "--data-dir", (dir / "ds1").string(), "--out-dir", (dir / "p2").string(), "--jobs",
                 "3"})
                .code == kExitOk);
    CHECK(directory_digest(dir / "p1") == directory_digest(dir / "p2"));

    const Run e1 = run({"eval", "--pred-dir", (dir / "p1").string(), "--gt-dir", (dir / "ds1").string(), "--out",
                        (dir / "m1.csv").string()});
    const Run e2 = run({"eval", "--pred-dir", (dir / "p2").string(), "--gt-dir", (dir / "ds1").string(), "--out",
                        (dir / "m2.csv").string(), "--jobs", "4"});
    REQUIRE(e1.code == kExitOk);
    REQUIRE(e2.code == kExitOk);
    CHECK(fixture::read_file(dir / "m1.csv") == fixture::read_file(dir / "m2.csv"));
    CHECK(fixture::read_file(dir / "m1.csv").find("pa_mpjpe_mm") != std::string::npos);

    // The unit factor scales millimeter metrics and is required without a manifest.
    const Run half = run({"eval", "--pred-dir", (dir / "p1").string(), "--gt-dir", (dir / "ds1").string(),
                          "--metrics", "pa-mpjpe", "--unit-to-mm", "500"});
    REQUIRE(half.code == kExitOk);
    std::filesystem::remove(dir / "ds1" / "manifest.json");
    const Run none = run({"eval", "--pred-dir", (dir / "p1").string(), "--gt-dir", (dir / "ds1").string()});
    CHECK(none.code == kExitUsage);
    CHECK(single_line(none.err));
  }
}

TEST_CASE("gradcheck") {
  Run r = run({"gradcheck", "--trials", "20", "--seed", "3"});
  CHECK(r.code == kExitOk);
  CHECK(value_of(r.out, "trials") == "20");
  CHECK(value_of(r.out, "failures") == "0");
  r = run({"gradcheck", "--trials", "5", "--tol", "1e-14"});
  CHECK(r.code == kExitNumerical);
  CHECK(value_of(r.out, "failures") != "0");
}
