#pragma once

#include <Eigen/Core>

namespace handfit {

struct AdamConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd x;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Eigen::VectorXd start)
      : x(std::move(start)), m(Eigen::VectorXd::Zero(x.size())), v(Eigen::VectorXd::Zero(x.size())) {}
};

/// One bias-corrected Adam update of state.x against `grad`.
AdamState adam_step(AdamState state, const Eigen::VectorXd& grad, const AdamConfig& config);

} // namespace handfit
