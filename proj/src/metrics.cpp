#include "handfit/metrics.hpp"

#include <cstdio>

namespace handfit {

double pck(std::span<const ErrorSample> samples, double threshold_mm) {
  if (!(threshold_mm >= 0)) {
    throw DataError("pck: threshold must be non-negative");
  }
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    for (double e : s.joint_errors) {
      ++total;
      hits += e <= threshold_mm ? 1 : 0;
    }
  }
  if (total == 0) {
    throw DataError("pck: no joint errors");
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double auc(std::span<const ErrorSample> samples, double lo_mm, double hi_mm, int steps) {
  if (!(hi_mm > lo_mm) || steps < 2) {
    throw DataError("auc: need hi > lo and at least 2 steps");
  }
  const double h = (hi_mm - lo_mm) / (steps - 1);
  double area = 0.0;
  double prev = pck(samples, lo_mm);
  for (int i = 1; i < steps; ++i) {
    const double cur = pck(samples, lo_mm + i * h);
    area += 0.5 * (prev + cur);
    prev = cur;
  }
  return area / (steps - 1);
}

double pa_mpjpe(const Points<double>& pred, const Points<double>& gt) {
  return pa_mean_error(pred, gt);
}

double pa_mpvpe(const Points<double>& pred, const Points<double>& gt) {
  return pa_mean_error(pred, gt);
}

std::vector<double> point_errors(const Points<double>& pred, const Points<double>& gt, double unit_to_mm) {
  if (pred.rows() != gt.rows()) {
    throw DataError("point counts differ");
  }
  std::vector<double> out(pred.rows());
  for (int i = 0; i < pred.rows(); ++i) {
    out[i] = (pred.row(i) - gt.row(i)).norm() * unit_to_mm;
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "metric,range,value,samples,steps\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%s,%.17g,%d,%d\n", r.metric.c_str(), r.range.c_str(), r.value,
                  r.samples, r.steps);
    out += line;
  }
  return out;
}

nlohmann::json metrics_json(const std::vector<MetricRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"metric", r.metric},
                   {"range", r.range},
                   {"value", r.value},
                   {"samples", r.samples},
                   {"steps", r.steps}});
  }
  return out;
}

} // namespace handfit
