#pragma once

#include "handfit/types.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace handfit {

/// Per-joint (and optionally per-vertex) Euclidean errors of one hand, in millimeters.
struct ErrorSample {
  std::vector<double> joint_errors;
  std::vector<double> vertex_errors;
};

/// Fraction of all joint errors <= threshold_mm. Throws DataError on empty input.
double pck(std::span<const ErrorSample> samples, double threshold_mm);

/// Normalized trapezoidal area under the PCK curve sampled at `steps` equally spaced
/// thresholds in [lo_mm, hi_mm].
double auc(std::span<const ErrorSample> samples, double lo_mm, double hi_mm, int steps = 100);

template <typename Scalar>
using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

template <typename Scalar>
struct Similarity {
  Scalar scale = Scalar(1);
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  Points<Scalar> apply(const Points<Scalar>& points) const {
    Points<Scalar> out = (scale * (points * rotation.transpose())).eval();
    out.rowwise() += translation.transpose();
    return out;
  }
};

template <typename Scalar>
struct Alignment {
  Points<Scalar> aligned;
  Similarity<Scalar> transform;
};

/// Proper-rotation similarity (s R p + t) minimizing the squared distance to `gt`.
/// Throws DegenerateError for fewer than 3 points or rank < 2 configurations.
template <typename Scalar>
Alignment<Scalar> procrustes_align(const Points<Scalar>& pred, const Points<Scalar>& gt) {
  if (pred.rows() != gt.rows()) {
    throw DataError("procrustes: point counts differ");
  }
  if (pred.rows() < 3) {
    throw DegenerateError("procrustes: need at least 3 points");
  }
  const Points<Scalar> pc = pred.rowwise() - pred.colwise().mean();
  const Points<Scalar> gc = gt.rowwise() - gt.colwise().mean();
  const Matrix3<Scalar> cov = gc.transpose() * pc;
  const Vector3<Scalar> sv = Eigen::JacobiSVD<Matrix3<Scalar>>(cov).singularValues();
  if (!(pc.squaredNorm() > Scalar(0)) || !(gc.squaredNorm() > Scalar(0)) ||
      !(sv(1) > Scalar(1e-12) * sv(0))) {
    throw DegenerateError("procrustes: rank-deficient configuration");
  }
  const Eigen::Matrix<Scalar, 4, 4> t =
      Eigen::umeyama(pred.transpose(), gt.transpose(), /*with_scaling=*/true);
  Alignment<Scalar> out;
  const Matrix3<Scalar> sr = t.template topLeftCorner<3, 3>();
  out.transform.scale = std::cbrt(sr.determinant());
  out.transform.rotation = sr / out.transform.scale;
  out.transform.translation = t.template topRightCorner<3, 1>();
  out.aligned = out.transform.apply(pred);
  return out;
}

/// Mean Euclidean distance after Procrustes alignment, in the input units.
template <typename Scalar>
Scalar pa_mean_error(const Points<Scalar>& pred, const Points<Scalar>& gt) {
  return (procrustes_align(pred, gt).aligned - gt).rowwise().norm().mean();
}

double pa_mpjpe(const Points<double>& pred, const Points<double>& gt);
double pa_mpvpe(const Points<double>& pred, const Points<double>& gt);

/// Per-point distances, scaled by `unit_to_mm`.
std::vector<double> point_errors(const Points<double>& pred, const Points<double>& gt, double unit_to_mm);

struct MetricRow {
  std::string metric;
  std::string range;
  double value = 0.0;
  int samples = 0;
  int steps = 0;
};

/// CSV with header `metric,range,value,samples,steps`.
std::string metrics_csv(const std::vector<MetricRow>& rows);
nlohmann::json metrics_json(const std::vector<MetricRow>& rows);

} // namespace handfit
