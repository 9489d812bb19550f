#include "handfit/hand_model.hpp"
#include "handfit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace handfit {

namespace {

struct FingerLayout {
  Eigen::Vector3d base;
  Eigen::Vector3d direction;
  std::array<double, 3> lengths;
  double radius;
};

// Rest pose: wrist at the origin, palm in the z = 0 plane, fingers pointing to -y.
std::array<FingerLayout, kNumFingers> base_layout() {
  return {{
      {{-0.030, -0.020, 0.0}, {-0.6, -0.8, 0.0}, {0.038, 0.032, 0.028}, 0.0100},
      {{-0.026, -0.085, 0.0}, {-0.05, -1.0, 0.0}, {0.040, 0.024, 0.021}, 0.0090},
      {{-0.008, -0.090, 0.0}, {0.0, -1.0, 0.0}, {0.045, 0.028, 0.023}, 0.0092},
      {{0.010, -0.086, 0.0}, {0.05, -1.0, 0.0}, {0.042, 0.026, 0.022}, 0.0088},
      {{0.026, -0.078, 0.0}, {0.12, -1.0, 0.0}, {0.033, 0.020, 0.019}, 0.0078},
  }};
}

struct Resolution {
  int ring_points;
  int rings_per_segment;
};

Resolution choose_resolution(int budget) {
  int m = 3;
  if (budget >= 1000) {
    m = 8;
  } else if (budget >= 400) {
    m = 6;
  } else if (budget >= 128) {
    m = 4;
  }
  // wrist center; palm: two rings of 2m points; fingers: 15 segments of r rings; 5 tips
  const int r = (budget - 1 - 4 * m - kNumTips) / (15 * m);
  return {m, std::max(r, 1)};
}

// Shape displacement coefficients of one blend shape.
struct ShapeBasis {
  std::array<double, kNumFingers> finger_length;
  double width;
  double palm;
};

} // namespace

HandModel make_toy_model(std::uint64_t seed, int vertex_budget) {
  if (vertex_budget < 64) {
    throw DataError("toy model needs a vertex budget of at least 64");
  }
  Rng rng(seed, /*stream=*/0x70790000);
  auto layout = base_layout();
  for (auto& finger : layout) {
    finger.direction.normalize();
    finger.base += 0.002 * Eigen::Vector3d(rng.normal(), rng.normal(), 0.0);
    for (double& length : finger.lengths) {
      length *= 1.0 + std::clamp(0.04 * rng.normal(), -0.1, 0.1);
    }
  }

  const Resolution res = choose_resolution(vertex_budget);
  const int m = res.ring_points;
  const int r = res.rings_per_segment;
  const int palm_points = 2 * m;
  const int num_vertices = 1 + 2 * palm_points + 15 * r * m + kNumTips;

  std::vector<ShapeBasis> basis(kNumShape);
  for (auto& b : basis) {
    for (double& l : b.finger_length) {
      l = 0.04 * rng.normal();
    }
    b.width = 0.03 * rng.normal();
    b.palm = 0.03 * rng.normal();
  }

  Vertices verts(num_vertices, 3);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(num_vertices, kNumJoints);
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(3 * num_vertices, kNumShape);
  Eigen::MatrixXd regressor = Eigen::MatrixXd::Zero(kNumJoints, num_vertices);
  std::vector<Eigen::Vector3i> faces;
  std::array<int, kNumTips> tips{};
  std::array<int, kNumJoints> parents{};
  parents[0] = -1;

  const Eigen::Vector3d normal(0.0, 0.0, 1.0);
  int next = 0;

  // Wrist center at the origin: the root regressor and the hub of the wrist cap.
  verts.row(next) = Eigen::RowVector3d::Zero();
  weights(next, 0) = 1.0;
  regressor(0, next) = 1.0;
  const int wrist_center = next++;

  // Palm: wrist ring around the origin and a mid-palm ring, both rigid with the wrist.
  const std::array<Eigen::Vector3d, 2> palm_centers = {Eigen::Vector3d(0.0, 0.0, 0.0),
                                                       Eigen::Vector3d(-0.002, -0.045, 0.0)};
  const std::array<double, 2> palm_half_width = {0.035, 0.042};
  for (int ring = 0; ring < 2; ++ring) {
    for (int p = 0; p < palm_points; ++p) {
      const double phi = 2.0 * std::numbers::pi * p / palm_points;
      const Eigen::Vector3d x = palm_centers[ring] +
                                Eigen::Vector3d(palm_half_width[ring] * std::cos(phi), 0.0,
                                                0.012 * std::sin(phi));
      verts.row(next) = x.transpose();
      weights(next, 0) = 1.0;
      for (int b = 0; b < kNumShape; ++b) {
        dirs.block<3, 1>(3 * next, b) = basis[b].palm * x;
      }
      ++next;
    }
  }
  for (int p = 0; p < palm_points; ++p) {
    const int a = 1 + p, b = 1 + (p + 1) % palm_points;
    faces.emplace_back(a, b, palm_points + b);
    faces.emplace_back(a, palm_points + b, palm_points + a);
    faces.emplace_back(wrist_center, b, a);
  }

  for (int f = 0; f < kNumFingers; ++f) {
    const FingerLayout& finger = layout[f];
    const FingerChain chain = finger_chain(f);
    const std::array<int, 3> joints = {chain.base, chain.middle, chain.distal};
    parents[chain.base] = 0;
    parents[chain.middle] = chain.base;
    parents[chain.distal] = chain.middle;

    const Eigen::Vector3d side = finger.direction.cross(normal).normalized();
    const double total = finger.lengths[0] + finger.lengths[1] + finger.lengths[2];

    auto add_shape = [&](int vertex, const Eigen::Vector3d& x) {
      const double axial = (x - finger.base).dot(finger.direction);
      const Eigen::Vector3d radial = x - finger.base - axial * finger.direction;
      for (int b = 0; b < kNumShape; ++b) {
        dirs.block<3, 1>(3 * vertex, b) = basis[b].palm * finger.base +
                                          basis[b].finger_length[f] * axial * finger.direction +
                                          basis[b].width * radial;
      }
    };

    const int first_ring = next;
    double start = 0.0;
    for (int s = 0; s < 3; ++s) {
      const int joint = joints[s];
      const int parent = parents[joint];
      for (int i = 0; i < r; ++i) {
        const double frac = static_cast<double>(i) / r;
        const double axial = start + frac * finger.lengths[s];
        const Eigen::Vector3d center = finger.base + axial * finger.direction;
        const double radius = finger.radius * (1.0 - 0.25 * axial / total);
        const double own = frac < 0.35 ? 0.5 + frac / 0.7 : 1.0;
        for (int p = 0; p < m; ++p) {
          const double phi = 2.0 * std::numbers::pi * p / m;
          const Eigen::Vector3d x = center + radius * (std::cos(phi) * side + std::sin(phi) * normal);
          verts.row(next) = x.transpose();
          weights(next, joint) = own;
          weights(next, parent) += 1.0 - own;
          add_shape(next, x);
          if (i == 0) {
            regressor(joint, next) = 1.0 / m;
          }
          ++next;
        }
      }
      start += finger.lengths[s];
    }
    const int rings = 3 * r;
    for (int ring = 0; ring + 1 < rings; ++ring) {
      const int a0 = first_ring + ring * m;
      const int b0 = a0 + m;
      for (int p = 0; p < m; ++p) {
        const int q = (p + 1) % m;
        faces.emplace_back(a0 + p, a0 + q, b0 + q);
        faces.emplace_back(a0 + p, b0 + q, b0 + p);
      }
    }
    const Eigen::Vector3d tip = finger.base + total * finger.direction;
    verts.row(next) = tip.transpose();
    weights(next, chain.distal) = 1.0;
    add_shape(next, tip);
    tips[f] = next;
    const int last_ring = first_ring + (rings - 1) * m;
    for (int p = 0; p < m; ++p) {
      faces.emplace_back(last_ring + p, last_ring + (p + 1) % m, next);
    }
    ++next;
  }

  Faces face_matrix(static_cast<int>(faces.size()), 3);
  for (int i = 0; i < static_cast<int>(faces.size()); ++i) {
    face_matrix.row(i) = faces[i].transpose();
  }
  return HandModel(std::move(verts), std::move(face_matrix), std::move(weights), parents,
                   std::move(dirs), std::move(regressor), tips, HandSide::right);
}

} // namespace handfit
