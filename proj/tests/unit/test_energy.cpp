#include "handfit/energy.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

using namespace handfit;
using fixture::max_abs;

namespace {

const HandModel& toy() {
  static const HandModel model = make_toy_model(1, 512);
  return model;
}

Joints relative_joints(const HandModel& m, const HandParams& p) {
  Joints j = oracle::regress(m, oracle::skin(m, p));
  const Eigen::RowVector3d root = j.row(0);
  j.rowwise() -= root;
  return j;
}

Reprojection persp(double scale, const Eigen::Vector3d& root) {
  Reprojection r;
  r.camera = CameraSpec::perspective(600, 600, 320, 240);
  r.scale = scale;
  r.root = root;
  return r;
}

Keypoints exact_pixels(const HandModel& m, const HandParams& p, const Reprojection& r) {
  const Joints j = relative_joints(m, p);
  Keypoints k;
  for (int i = 0; i < kNumKeypoints; ++i) {
    k.row(i) = oracle::pixel(r, j.row(i).transpose()).transpose();
  }
  return k;
}

Joints finger_with_bones(const Eigen::Vector3d& ab, const Eigen::Vector3d& bc, const Eigen::Vector3d& cd) {
  // Fingers spaced apart along x; each finger reuses the same bone vectors.
  Joints j = Joints::Zero();
  for (int f = 0; f < kNumFingers; ++f) {
    const FingerChain c = finger_chain(f);
    const Eigen::RowVector3d base(0.1 * f, 0.0, 0.0);
    j.row(c.base) = base;
    j.row(c.middle) = base + cd.transpose();
    j.row(c.distal) = j.row(c.middle) + bc.transpose();
    j.row(c.tip) = j.row(c.distal) + ab.transpose();
  }
  return j;
}

} // namespace

TEST_CASE("scale energy") {
  const HandModel& m = toy();
  Rng rng(1);
  const Intrinsics k = CameraSpec::perspective(600, 600, 320, 240).intrinsics;
  const Eigen::Vector3d root(0.02, -0.01, 0.6);

  SUBCASE("exact projections give zero") {
    const HandParams p = fixture::random_params(rng, 0.4);
    const Keypoints kps = exact_pixels(m, p, persp(1.3, root));
    CHECK(e_scale(1.3, m, p, k, kps, root) <= 1e-18);
  }
  SUBCASE("doubling the scale of a planar hand leaves a residual") {
    const HandParams p;
    const Keypoints kps = exact_pixels(m, p, persp(1.0, root));
    CHECK(e_scale(2.0, m, p, k, kps, root) > 1.0);
  }
  SUBCASE("matches a per-joint projection oracle") {
    for (int t = 0; t < 10; ++t) {
      const HandParams p = fixture::random_params(rng, 0.5);
      Keypoints kps;
      for (int i = 0; i < kNumKeypoints; ++i) {
        kps.row(i) << rng.uniform(0, 640), rng.uniform(0, 480);
      }
      const double s = rng.uniform(0.7, 1.4);
      const Joints j = relative_joints(m, p);
      double expected = 0.0;
      for (int i = 0; i < kNumKeypoints; ++i) {
        const Eigen::Vector3d q = s * j.row(i).transpose() + root;
        expected += (project_persp(k, q) - kps.row(i).transpose()).squaredNorm();
      }
      expected /= kNumKeypoints;
      CHECK(e_scale(s, m, p, k, kps, root) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
  SUBCASE("a joint behind the camera is reported") {
    const HandParams p;
    const Keypoints kps = Keypoints::Zero();
    CHECK_THROWS_AS(e_scale(1.0, m, p, k, kps, Eigen::Vector3d(0, 0, -0.5)), BehindCameraError);
  }
}

TEST_CASE("joint energy") {
  const HandModel& m = toy();
  Rng rng(2);
  const HandParams p = fixture::random_params(rng, 0.4);
  const Reprojection r = persp(1.1, Eigen::Vector3d(0.0, 0.0, 0.6));
  const Keypoints kps = exact_pixels(m, p, r);

  CHECK(e_joint(m, p, r, kps) <= 1e-18);

  Keypoints shifted = kps;
  shifted.row(9) += Eigen::RowVector2d(3.0, 4.0);
  CHECK(e_joint(m, p, r, shifted) == doctest::Approx(25.0 / 21.0).epsilon(1e-9));
  CHECK(e_joint(m, p, r, shifted, Confidences::Ones(), ResidualNormalization::sum) ==
        doctest::Approx(25.0).epsilon(1e-9));
  Confidences conf = Confidences::Ones();
  conf(9) = 0.5;
  CHECK(e_joint(m, p, r, shifted, conf) == doctest::Approx(12.5 / 21.0).epsilon(1e-9));

  for (int t = 0; t < 10; ++t) {
    const HandParams q = fixture::random_params(rng, 0.6);
    Keypoints obs;
    for (int i = 0; i < kNumKeypoints; ++i) {
      obs.row(i) << rng.uniform(0, 640), rng.uniform(0, 480);
    }
    const Joints j = relative_joints(m, q);
    double expected = 0.0;
    for (int i = 0; i < kNumKeypoints; ++i) {
      expected += (oracle::pixel(r, j.row(i).transpose()) - obs.row(i).transpose()).squaredNorm();
    }
    CHECK(e_joint(m, q, r, obs) == doctest::Approx(expected / 21.0).epsilon(1e-10));
  }

  SUBCASE("weak camera") {
    Reprojection w;
    w.camera = CameraSpec::weak_perspective(2500, Eigen::Vector2d(320, 240));
    const Keypoints wk = exact_pixels(m, p, w);
    CHECK(e_joint(m, p, w, wk) <= 1e-18);
  }
}

TEST_CASE("twist energy") {
  const Eigen::Vector3d z(0, 0, 1), y(0, 1, 0);
  CHECK(twist_of_bones(z, z, z) == 0.0);
  CHECK(twist_of_bones(z, y, z) == doctest::Approx(1.0).epsilon(1e-15));

  // Consistent curl inside the y-z plane.
  const Eigen::Vector3d ab(0, 0.6, 0.8), bc(0, 0.3, 0.95), cd(0, 0, 1);
  CHECK(twist_of_bones(ab, bc, cd) == 0.0);

  CHECK(e_twist(finger_with_bones(z, z, z)) == 0.0);
  CHECK(e_twist(finger_with_bones(z, y, z)) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(e_twist(finger_with_bones(ab, bc, cd)) == 0.0);

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Joints j;
    for (int i = 0; i < kNumKeypoints; ++i) {
      j.row(i) = rng.unit_vector().transpose();
    }
    CHECK(e_twist(j) == doctest::Approx(oracle::twist(j)).epsilon(1e-12));
    CHECK(e_twist(j) >= 0.0);

    const Eigen::Matrix3d rot = Eigen::Quaterniond(Eigen::AngleAxisd(1.0, rng.unit_vector())).toRotationMatrix();
    Joints moved = (j * rot.transpose()).rowwise() + Eigen::RowVector3d(1, 2, 3);
    CHECK(e_twist(moved) == doctest::Approx(e_twist(j)).epsilon(1e-9));
  }
}

TEST_CASE("identity energy") {
  Rng rng(4);
  const HandParams a = fixture::random_params(rng);
  CHECK(e_identity(a, a) == 0.0);
  HandParams b = a;
  b.beta(3) += 1.0;
  CHECK(e_identity(b, a) == doctest::Approx(1.0).epsilon(1e-14));

  HandParams flipped = a;
  for (auto& q : flipped.theta) {
    q.coeffs() *= -1.0;
  }
  CHECK(e_identity(flipped, a) <= 1e-28);

  for (int t = 0; t < 20; ++t) {
    const HandParams p = fixture::random_params(rng), q = fixture::random_params(rng);
    double expected = 0.0;
    for (int k = 0; k < kNumJoints; ++k) {
      const Eigen::Vector4d u = to_wxyz(p.theta[k]), v = to_wxyz(q.theta[k]);
      const double sign = u.dot(v) < 0 ? -1.0 : 1.0;
      for (int c = 0; c < 4; ++c) {
        expected += (sign * u(c) - v(c)) * (sign * u(c) - v(c));
      }
    }
    for (int i = 0; i < kNumShape; ++i) {
      expected += (p.beta(i) - q.beta(i)) * (p.beta(i) - q.beta(i));
    }
    CHECK(e_identity(p, q) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("total energy and gradient") {
  const HandModel& m = toy();
  Rng rng(5);

  auto inputs = [&](bool weak) {
    oracle::EnergyInputs in;
    in.init = fixture::random_params(rng, 0.4);
    in.reprojection = weak ? Reprojection{CameraSpec::weak_perspective(2200, Eigen::Vector2d(320, 240))}
                           : persp(rng.uniform(0.8, 1.2), Eigen::Vector3d(0.01, 0.02, 0.6));
    for (int i = 0; i < kNumKeypoints; ++i) {
      in.keypoints.row(i) << rng.uniform(200, 440), rng.uniform(120, 360);
      in.confidences(i) = rng.uniform(0.2, 1.0);
    }
    return in;
  };

  SUBCASE("zero weights") {
    const oracle::EnergyInputs in = inputs(false);
    const EnergyReport r = total_energy_and_grad(m, fixture::random_params(rng), in.init, in.keypoints,
                                                 in.confidences, in.reprojection, EnergyWeights{0, 0, 0});
    CHECK(r.total == 0.0);
    CHECK(r.gradient.isZero(0.0));
  }

  SUBCASE("identity term alone at its center") {
    const oracle::EnergyInputs in = inputs(false);
    const EnergyReport r = total_energy_and_grad(m, in.init, in.init, in.keypoints, in.confidences,
                                                 in.reprojection, EnergyWeights{0, 0, 1});
    CHECK(r.total == 0.0);
    CHECK(r.gradient.isZero(0.0));
  }

  SUBCASE("exact observations of a natural pose") {
    oracle::EnergyInputs in = inputs(false);
    in.init = HandParams();
    in.keypoints = exact_pixels(m, in.init, in.reprojection);
    const EnergyReport r = total_energy_and_grad(m, in.init, in.init, in.keypoints, in.confidences,
                                                 in.reprojection, EnergyWeights{});
    CHECK(r.total <= 1e-18);
    CHECK(r.gradient.norm() <= 1e-9);
  }

  SUBCASE("matches the mesh-route oracle and finite differences") {
  for (const bool weak : {false, true}) {
    CAPTURE(weak);
    for (int t = 0; t < 8; ++t) {
      oracle::EnergyInputs in = inputs(weak);
      in.mean = (t % 2 == 0);
      in.weights = EnergyWeights{rng.uniform(0.5, 2), rng.uniform(50, 200), rng.uniform(0.05, 0.2)};
      const TailorEnergy energy(m, in.init, in.keypoints, in.confidences, in.reprojection, in.weights,
                                in.mean ? ResidualNormalization::mean : ResidualNormalization::sum);
      HandParams p = in.init;
      for (auto& q : p.theta) {
        q = q * Eigen::Quaterniond(Eigen::AngleAxisd(0.2, rng.unit_vector()));
      }
      for (int b = 0; b < kNumShape; ++b) {
        p.beta(b) += 0.3 * rng.normal();
      }
      const ParamVector x = p.flat();
      const EnergyReport r = energy.evaluate(x);

      EnergyTerms terms;
      const double expected = oracle::energy(m, x, in, &terms);
      CHECK(r.total == doctest::Approx(expected).epsilon(1e-10));
      CHECK(r.terms.joint == doctest::Approx(terms.joint).epsilon(1e-10));
      CHECK(r.terms.twist == doctest::Approx(terms.twist).epsilon(1e-10).scale(1e-6));
      CHECK(r.terms.identity == doctest::Approx(terms.identity).epsilon(1e-12));
      const double recombined =
          in.weights.joint * r.terms.joint + in.weights.twist * r.terms.twist + in.weights.identity * r.terms.identity;
      CHECK(std::abs(r.total - recombined) <= 1e-9);

      const std::function<double(const ParamVector&)> f = [&](const ParamVector& y) {
        return oracle::energy(m, y, in);
      };
      const ParamVector numeric = oracle::central_difference<ParamVector>(f, x, 1e-5);
      CHECK(oracle::max_relative_error(r.gradient, numeric, 1e-6) < 1e-4);
    }
  }
  }

  SUBCASE("behind-camera joint is named") {
    oracle::EnergyInputs in = inputs(false);
    in.reprojection.root = Eigen::Vector3d(0, 0, 0.01);
    in.reprojection.scale = 1.0;
    const TailorEnergy energy(m, in.init, in.keypoints, in.confidences, in.reprojection, EnergyWeights{});
    HandParams p = in.init;
    p.theta[0] = Eigen::Quaterniond(Eigen::AngleAxisd(1.2, Eigen::Vector3d::UnitX()));
    try {
      energy.evaluate(p);
      FAIL("expected a behind-camera error");
    } catch (const BehindCameraError& e) {
      CHECK(e.joint() > 0);
      CHECK(e.joint() < kNumKeypoints);
    }
  }

  SUBCASE("quaternion sign does not change the energy") {
    const oracle::EnergyInputs in = inputs(false);
    const TailorEnergy energy(m, in.init, in.keypoints, in.confidences, in.reprojection, EnergyWeights{});
    HandParams p = fixture::random_params(rng, 0.3);
    const double before = energy.value(p.flat());
    for (auto& q : p.theta) {
      q.coeffs() *= -1.0;
    }
    CHECK(energy.value(p.flat()) == doctest::Approx(before).epsilon(1e-12));
  }
}
