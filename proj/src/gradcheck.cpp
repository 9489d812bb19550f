#include "handfit/gradcheck.hpp"
#include "handfit/random.hpp"

#include <cmath>
#include <string>

namespace handfit {

namespace {

constexpr std::uint64_t kGradcheckStream = 0x67726164ULL;
constexpr double kKinkMargin = 1e-3;

bool near_twist_kink(const Joints& p) {
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerChain c = finger_chain(f);
    const Eigen::Vector3d ab = (p.row(c.tip) - p.row(c.distal)).transpose();
    const Eigen::Vector3d bc = (p.row(c.distal) - p.row(c.middle)).transpose();
    const Eigen::Vector3d cd = (p.row(c.middle) - p.row(c.base)).transpose();
    const double scale = ab.norm() * bc.norm() * cd.norm();
    if (std::abs(ab.cross(bc).dot(cd)) < kKinkMargin * scale ||
        std::abs(ab.cross(bc).dot(bc.cross(cd))) < kKinkMargin * scale * bc.norm()) {
      return true;
    }
  }
  return false;
}

Eigen::Quaterniond random_rotation(Rng& rng, double sigma) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(sigma * rng.normal(), rng.unit_vector()));
}

} // namespace

GradcheckProblem gradcheck_problem(const HandModel& model, std::uint64_t seed, int index) {
  Rng rng(seed, kGradcheckStream, static_cast<std::uint64_t>(index));
  GradcheckProblem pb;
  for (;;) {
    for (int k = 0; k < kNumJoints; ++k) {
      const Eigen::Quaterniond q = random_rotation(rng, 0.6);
      pb.params.theta[k] = Eigen::Quaterniond(q.coeffs() * rng.uniform(0.8, 1.25));
    }
    for (int b = 0; b < kNumShape; ++b) {
      pb.params.beta(b) = rng.normal();
    }
    HandParams unit = pb.params;
    unit.normalize();
    if (!near_twist_kink(posed_keypoints(model, unit))) {
      break;
    }
  }

  pb.init = pb.params;
  pb.init.normalize();
  for (int k = 0; k < kNumJoints; ++k) {
    pb.init.theta[k] = (pb.init.theta[k] * random_rotation(rng, 0.2)).normalized();
  }
  for (int b = 0; b < kNumShape; ++b) {
    pb.init.beta(b) += 0.3 * rng.normal();
  }

  HandParams target = pb.init;
  for (int k = 0; k < kNumJoints; ++k) {
    target.theta[k] = (target.theta[k] * random_rotation(rng, 0.2)).normalized();
  }
  const Joints relative = root_relative_keypoints(model, target);

  if (index % 2 == 0) {
    const double f = rng.uniform(500.0, 700.0);
    pb.reprojection.camera = CameraSpec::perspective(f, f * rng.uniform(0.95, 1.05), 320.0, 240.0);
    pb.reprojection.scale = rng.uniform(0.8, 1.2);
    pb.reprojection.root = Eigen::Vector3d(0.05 * rng.normal(), 0.05 * rng.normal(), rng.uniform(0.4, 0.8));
  } else {
    pb.reprojection.camera = CameraSpec::weak_perspective(
        rng.uniform(1500.0, 3000.0), Eigen::Vector2d(320.0 + 20.0 * rng.normal(), 240.0 + 20.0 * rng.normal()));
  }
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Eigen::Vector2d px = pb.reprojection.pixel(relative.row(i).transpose(), i);
    pb.keypoints.row(i) = (px + Eigen::Vector2d(3.0 * rng.normal(), 3.0 * rng.normal())).transpose();
    pb.confidences(i) = rng.uniform(0.2, 1.0);
  }
  pb.weights.joint = rng.uniform(0.5, 2.0);
  pb.weights.twist = 100.0 * rng.uniform(0.5, 2.0);
  pb.weights.identity = 0.1 * rng.uniform(0.5, 2.0);
  pb.normalization = index % 4 == 3 ? ResidualNormalization::sum : ResidualNormalization::mean;
  return pb;
}

GradcheckOutcome run_gradcheck(const HandModel& model, int trials, double eps, double tol, std::uint64_t seed,
                               double floor) {
  if (trials < 1 || !(eps > 0) || !(tol > 0)) {
    throw DataError("gradcheck: trials, eps and tol must be positive");
  }
  GradcheckOutcome out;
  for (int t = 0; t < trials; ++t) {
    const GradcheckProblem pb = gradcheck_problem(model, seed, t);
    const TailorEnergy energy(model, pb.init, pb.keypoints, pb.confidences, pb.reprojection, pb.weights,
                              pb.normalization);
    const ParamVector x = pb.params.flat();
    const ParamVector analytic = energy.evaluate(x).gradient;
    bool failed = false;
    for (int i = 0; i < kNumParams; ++i) {
      ParamVector plus = x, minus = x;
      plus(i) += eps;
      minus(i) -= eps;
      const double numeric = (energy.value(plus) - energy.value(minus)) / (2.0 * eps);
      const double a = std::abs(analytic(i)), n = std::abs(numeric);
      if (a < floor && n < floor) {
        continue;
      }
      const double err = std::abs(analytic(i) - numeric) / std::max(a, n);
      if (err > tol) {
        failed = true;
      }
      if (err > out.worst_error) {
        out.worst_error = err;
        out.worst_trial = t;
        out.worst_coordinate = i;
        out.worst_analytic = analytic(i);
        out.worst_numeric = numeric;
      }
    }
    out.failures += failed ? 1 : 0;
    ++out.trials;
  }
  return out;
}

std::string parameter_name(int coordinate) {
  if (coordinate < 0 || coordinate >= kNumParams) {
    return "none";
  }
  if (coordinate < 4 * kNumJoints) {
    static const char* kComponent = "wxyz";
    return "theta[" + std::to_string(coordinate / 4) + "]." + kComponent[coordinate % 4];
  }
  return "beta[" + std::to_string(coordinate - 4 * kNumJoints) + "]";
}

} // namespace handfit
