#include "handfit/cli.hpp"
#include "handfit/gradcheck.hpp"
#include "handfit/metrics.hpp"
#include "handfit/model_io.hpp"
#include "handfit/synth.hpp"
#include "handfit/tailor.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace handfit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

HandModel resolve_model(const std::string& path, const fs::path& dataset_dir = {}) {
  if (!path.empty()) {
    return load_model(path);
  }
  if (const char* env = std::getenv(kModelEnv); env != nullptr && *env != '\0') {
    return load_model(env);
  }
  if (!dataset_dir.empty() && fs::exists(dataset_dir / "manifest.json")) {
    return synth_model(synth_config_from_json(read_json_file(dataset_dir / "manifest.json").at("synth_config")));
  }
  return make_toy_model(1, 512);
}

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  jobs = std::clamp(jobs, 1, std::max(1, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) {
      body(i);
    }
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += jobs) {
          body(i);
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

json rows_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    out.push_back(std::move(row));
  }
  return out;
}

Joints joints_from_json(const json& j) {
  Joints out;
  if (!j.is_array() || j.size() != kNumKeypoints) {
    throw DataError("expected 21 joints");
  }
  for (int r = 0; r < kNumKeypoints; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) {
      throw DataError("expected 3 coordinates per joint");
    }
    for (int c = 0; c < 3; ++c) {
      out(r, c) = j[r][c].get<double>();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------

struct FitOptions {
  std::string keypoints;
  std::string model;
  std::string camera;
  bool weak = false;
  int iterations = 20;
  double learning_rate = 0.003;
  std::string init;
  std::string out_mesh;
  std::string report;
  bool no_timing = false;
};

FitConfig fit_config(ProjectionMode mode, int iterations, double learning_rate) {
  FitConfig cfg;
  cfg.mode = mode;
  cfg.iterations = iterations;
  cfg.adam.learning_rate = learning_rate;
  return cfg;
}

int cmd_fit(const FitOptions& o, std::ostream& out) {
  if (!o.weak && o.camera.empty()) {
    throw UsageError("perspective fitting needs --camera (or use --weak)");
  }
  const HandModel model = resolve_model(o.model);
  const Observations obs = load_observations(o.keypoints);
  const HandParams init = o.init.empty() ? HandParams() : load_params(o.init);
  CameraSpec camera;
  if (!o.weak) {
    camera = camera_from_json(read_json_file(o.camera));
    if (camera.mode != ProjectionMode::perspective) {
      throw UsageError("--camera must hold intrinsics; use --weak for weak perspective");
    }
  }
  const FitConfig cfg = fit_config(o.weak ? ProjectionMode::weak : ProjectionMode::perspective, o.iterations,
                                   o.learning_rate);
  const FitResult result = tailor_fit(model, init, obs, camera, cfg);
  if (!o.out_mesh.empty()) {
    write_obj(fitted_mesh(model, result), o.out_mesh);
  }
  json report = fit_report_json(result, !o.no_timing);
  report["keypoints"] = rows_json(fitted_keypoints(model, result));
  if (!o.report.empty()) {
    write_json_file(report, o.report);
  }
  out << "s_star " << fmt("%.10g", result.s_star) << "\n"
      << "final_energy " << fmt("%.10g", result.final_energy) << "\n"
      << "elapsed_ms " << fmt("%.3f", result.timing.total_ms) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------

struct FitDatasetOptions {
  std::string data_dir;
  std::string out_dir;
  std::string model;
  bool weak = false;
  int iterations = 20;
  double learning_rate = 0.003;
  int jobs = 1;
  bool timing = false;
};

std::vector<std::string> manifest_cases(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  try {
    return manifest.at("cases").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

int cmd_fit_dataset(const FitDatasetOptions& o, std::ostream& out) {
  const fs::path data(o.data_dir), dest(o.out_dir);
  const HandModel model = resolve_model(o.model, data);
  const std::vector<std::string> cases = manifest_cases(data);
  const CameraSpec camera = camera_from_json(read_json_file(data / "camera.json"));
  const ProjectionMode mode = o.weak || camera.mode == ProjectionMode::weak ? ProjectionMode::weak
                                                                            : ProjectionMode::perspective;
  const FitConfig cfg = fit_config(mode, o.iterations, o.learning_rate);
  fs::create_directories(dest);
  std::vector<double> total_ms(cases.size(), 0.0);
  parallel_for(static_cast<int>(cases.size()), o.jobs, [&](int i) {
    const std::string& id = cases[i];
    const Observations obs = load_observations(data / (id + ".obs.json"));
    const HandParams init = load_params(data / (id + ".init.json"));
    const FitResult result = tailor_fit(model, init, obs, camera, cfg);
    json report = fit_report_json(result, o.timing);
    report["joints"] = rows_json(root_relative_keypoints(model, result.params));
    report["keypoints"] = rows_json(fitted_keypoints(model, result));
    write_json_file(report, dest / (id + ".fit.json"));
    total_ms[i] = result.timing.total_ms;
  });
  double sum = 0.0;
  for (double t : total_ms) {
    sum += t;
  }
  out << "fitted " << cases.size() << " cases\n";
  out << "mean_fit_ms " << fmt("%.3f", cases.empty() ? 0.0 : sum / cases.size()) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------

struct SynthOptions {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  SynthConfig cfg;
  if (!o.config.empty()) {
    const json j = read_json_file(o.config);
    const json& body = j.contains("synth_config") ? j.at("synth_config") : j;
    if (!body.contains("seed") && !o.seed) {
      throw UsageError("synth needs a seed in the config or --seed");
    }
    cfg = synth_config_from_json(body);
  } else if (!o.seed) {
    throw UsageError("synth needs --config or --seed");
  }
  if (o.seed) {
    cfg.seed = *o.seed;
  }
  write_dataset(cfg, o.out_dir, o.jobs);
  out << "cases " << cfg.sample_count << "\n";
  out << "digest " << directory_digest(o.out_dir) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------

struct EvalOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string metrics = "pa-mpjpe,pck,auc";
  std::string out;
  std::string model;
  double pck_threshold = 20.0;
  std::optional<double> unit_to_mm;
  int jobs = 1;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

std::vector<std::string> gt_cases(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) {
    return manifest_cases(dir);
  }
  std::vector<std::string> out;
  const std::string suffix = ".gt.json";
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      out.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path prediction_file(const fs::path& dir, const std::string& id) {
  for (const char* suffix : {".fit.json", ".pred.json"}) {
    const fs::path p = dir / (id + suffix);
    if (fs::exists(p)) {
      return p;
    }
  }
  throw DataError("no prediction for " + id + " in " + dir.string());
}

Joints prediction_joints(const json& j, const HandModel* model) {
  if (j.contains("joints")) {
    return joints_from_json(j.at("joints"));
  }
  if (j.contains("params") && model != nullptr) {
    return root_relative_keypoints(*model, params_from_json(j.at("params")));
  }
  throw DataError("prediction has neither joints nor params");
}

Vertices posed_vertices(const HandModel& model, const json& j) {
  if (!j.contains("params")) {
    throw DataError("vertex metrics need params in every prediction and ground truth");
  }
  HandParams params = params_from_json(j.at("params"));
  params.normalize();
  params.root.setZero();
  return skin(model, params).vertices;
}

// The flag wins; otherwise the ground-truth manifest must say what a model unit is.
double unit_to_mm(const EvalOptions& o, const fs::path& gt_dir) {
  double factor = 0.0;
  if (o.unit_to_mm) {
    factor = *o.unit_to_mm;
  } else if (fs::exists(gt_dir / "manifest.json") && read_json_file(gt_dir / "manifest.json").contains("unit_to_mm")) {
    factor = read_json_file(gt_dir / "manifest.json").at("unit_to_mm").get<double>();
  } else {
    throw UsageError("eval needs --unit-to-mm or a ground-truth manifest with unit_to_mm");
  }
  if (!(factor > 0) || !std::isfinite(factor)) {
    throw UsageError("unit-to-mm factor must be positive");
  }
  return factor;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const std::vector<std::string> metrics = split_list(o.metrics);
  for (const auto& m : metrics) {
    if (m != "pa-mpjpe" && m != "pa-mpvpe" && m != "pck" && m != "auc") {
      throw UsageError("unknown metric '" + m + "'");
    }
  }
  const bool vertices = std::find(metrics.begin(), metrics.end(), "pa-mpvpe") != metrics.end();
  const fs::path pred_dir(o.pred_dir), gt_dir(o.gt_dir);
  const HandModel model = resolve_model(o.model, gt_dir);
  const std::vector<std::string> cases = gt_cases(gt_dir);
  if (cases.empty()) {
    throw DataError("no ground truth cases in " + gt_dir.string());
  }
  const double to_mm = unit_to_mm(o, gt_dir);

  std::vector<ErrorSample> samples(cases.size());
  std::vector<double> mpjpe(cases.size()), mpvpe(cases.size());
  parallel_for(static_cast<int>(cases.size()), o.jobs, [&](int i) {
    const json gt = read_json_file(gt_dir / (cases[i] + ".gt.json"));
    const json pred = read_json_file(prediction_file(pred_dir, cases[i]));
    const Points<double> gt_joints = prediction_joints(gt, &model);
    const Points<double> pred_joints = prediction_joints(pred, &model);
    const Alignment<double> a = procrustes_align(pred_joints, gt_joints);
    samples[i].joint_errors = point_errors(a.aligned, gt_joints, to_mm);
    mpjpe[i] = (a.aligned - gt_joints).rowwise().norm().mean() * to_mm;
    if (vertices) {
      const Points<double> gv = posed_vertices(model, gt);
      const Points<double> pv = posed_vertices(model, pred);
      const Alignment<double> av = procrustes_align(pv, gv);
      samples[i].vertex_errors = point_errors(av.aligned, gv, to_mm);
      mpvpe[i] = (av.aligned - gv).rowwise().norm().mean() * to_mm;
    }
  });

  const int n = static_cast<int>(cases.size());
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
      s += x;
    }
    return s / static_cast<double>(v.size());
  };
  std::vector<MetricRow> rows;
  for (const auto& m : metrics) {
    if (m == "pa-mpjpe") {
      rows.push_back({"pa_mpjpe_mm", "", mean(mpjpe), n, 0});
    } else if (m == "pa-mpvpe") {
      rows.push_back({"pa_mpvpe_mm", "", mean(mpvpe), n, 0});
    } else if (m == "pck") {
      rows.push_back({"pck", fmt("%g", o.pck_threshold), pck(samples, o.pck_threshold), n, 0});
    } else if (m == "auc") {
      rows.push_back({"auc", "20-50", auc(samples, 20.0, 50.0), n, 100});
      rows.push_back({"auc", "5-20", auc(samples, 5.0, 20.0), n, 100});
    }
  }
  if (o.out.empty()) {
    out << metrics_csv(rows);
  } else if (fs::path(o.out).extension() == ".json") {
    write_json_file(metrics_json(rows), o.out);
  } else {
    write_text_file(metrics_csv(rows), o.out);
  }
  if (!o.out.empty()) {
    out << metrics_csv(rows);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------------

struct GradcheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  int trials = 1000;
  std::uint64_t seed = 0;
  std::string model;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const HandModel model = resolve_model(o.model);
  const auto start = std::chrono::steady_clock::now();
  const GradcheckOutcome r = run_gradcheck(model, o.trials, o.eps, o.tol, o.seed);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  out << "trials " << r.trials << "\n"
      << "failures " << r.failures << "\n"
      << "worst_relative_error " << fmt("%.3e", r.worst_error) << "\n"
      << "worst_trial " << r.worst_trial << "\n"
      << "worst_coordinate " << parameter_name(r.worst_coordinate) << "\n"
      << "worst_analytic " << fmt("%.10g", r.worst_analytic) << "\n"
      << "worst_numeric " << fmt("%.10g", r.worst_numeric) << "\n"
      << "elapsed_ms " << fmt("%.1f", ms) << "\n";
  return r.failures == 0 ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------------------------

struct ExportOptions {
  std::string out;
  std::string mesh;
  std::uint64_t seed = 1;
  int budget = 512;
  bool left = false;
};

int cmd_export(const ExportOptions& o, std::ostream& out) {
  HandModel model = make_toy_model(o.seed, o.budget);
  if (o.left) {
    model = mirrored(model);
  }
  save_model(model, o.out);
  if (!o.mesh.empty()) {
    write_obj(Mesh{model.template_vertices(), model.faces()}, o.mesh);
  }
  out << "vertices " << model.num_vertices() << "\n";
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hand mesh refinement from 2D keypoints", "handfit"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Refine a hand against one keypoint file");
  fit_cmd->add_option("--keypoints", fit.keypoints, "Keypoint JSON")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--model", fit.model, "Model JSON (default: $HANDFIT_MODEL or the built-in toy model)");
  auto* cam_opt = fit_cmd->add_option("--camera", fit.camera, "Intrinsics JSON")->check(CLI::ExistingFile);
  fit_cmd->add_flag("--weak", fit.weak, "Weak-perspective mode, no camera needed")->excludes(cam_opt);
  fit_cmd->add_option("--iters", fit.iterations, "Adam iterations")->capture_default_str();
  fit_cmd->add_option("--lr", fit.learning_rate, "Adam learning rate")->capture_default_str();
  fit_cmd->add_option("--init", fit.init, "Initial parameters JSON (default: rest pose)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out-mesh", fit.out_mesh, "Output OBJ");
  fit_cmd->add_option("--report", fit.report, "Output fit report JSON");
  fit_cmd->add_flag("--no-timing", fit.no_timing, "Leave timing out of the report");

  FitDatasetOptions fitd;
  auto* fitd_cmd = app.add_subcommand("fit-dataset", "Refine every case of a synthetic dataset");
  fitd_cmd->add_option("--data-dir", fitd.data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  fitd_cmd->add_option("--out-dir", fitd.out_dir, "Prediction directory")->required();
  fitd_cmd->add_option("--model", fitd.model, "Model JSON (default: the dataset's model)");
  fitd_cmd->add_flag("--weak", fitd.weak, "Weak-perspective mode");
  fitd_cmd->add_option("--iters", fitd.iterations, "Adam iterations")->capture_default_str();
  fitd_cmd->add_option("--lr", fitd.learning_rate, "Adam learning rate")->capture_default_str();
  fitd_cmd->add_option("--jobs", fitd.jobs, "Worker threads")->capture_default_str();
  fitd_cmd->add_flag("--timing", fitd.timing, "Include timing in each report");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic dataset");
  synth_cmd->add_option("--config", synth.config, "Synthesis config JSON or a dataset manifest")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Seed (overrides the config)");
  synth_cmd->add_option("--jobs", synth.jobs, "Worker threads")->capture_default_str();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--pred-dir", eval.pred_dir, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--gt-dir", eval.gt_dir, "Ground-truth directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--metrics", eval.metrics, "Comma list of pa-mpjpe, pa-mpvpe, pck, auc")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Output file (.csv or .json)");
  eval_cmd->add_option("--model", eval.model, "Model JSON for parameter-only files");
  eval_cmd->add_option("--pck-threshold", eval.pck_threshold, "PCK threshold in mm")->capture_default_str();
  eval_cmd->add_option("--unit-to-mm", eval.unit_to_mm, "Millimeters per model unit (default: from the manifest)");
  eval_cmd->add_option("--jobs", eval.jobs, "Worker threads")->capture_default_str();

  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--eps", grad.eps, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol, "Relative error tolerance")->capture_default_str();
  grad_cmd->add_option("--trials", grad.trials, "Random configurations")->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--model", grad.model, "Model JSON");

  ExportOptions exp;
  auto* exp_cmd = app.add_subcommand("export-model", "Write the built-in toy model as JSON");
  exp_cmd->add_option("--out", exp.out, "Output model JSON")->required();
  exp_cmd->add_option("--mesh", exp.mesh, "Also write the template as OBJ");
  exp_cmd->add_option("--seed", exp.seed, "Model seed")->capture_default_str();
  exp_cmd->add_option("--budget", exp.budget, "Vertex budget")->capture_default_str();
  exp_cmd->add_flag("--left", exp.left, "Mirror to a left hand");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "usage error: " << msg << "\n";
    return kExitUsage;
  }

  auto one_line = [](std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return msg;
  };
  try {
    if (fit_cmd->parsed()) {
      return cmd_fit(fit, out);
    }
    if (fitd_cmd->parsed()) {
      return cmd_fit_dataset(fitd, out);
    }
    if (synth_cmd->parsed()) {
      return cmd_synth(synth, out);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval, out);
    }
    if (grad_cmd->parsed()) {
      return cmd_gradcheck(grad, out);
    }
    if (exp_cmd->parsed()) {
      return cmd_export(exp, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const DegenerateError& e) {
    err << "numerical failure: " << one_line(e.what()) << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << one_line(e.what()) << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "data error: " << one_line(e.what()) << "\n";
    return kExitData;
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

} // namespace handfit
