#include "handfit/adam.hpp"
#include "handfit/types.hpp"

#include <cmath>

namespace handfit {

AdamState adam_step(AdamState state, const Eigen::VectorXd& grad, const AdamConfig& config) {
  if (grad.size() != state.x.size() || state.m.size() != state.x.size() ||
      state.v.size() != state.x.size()) {
    throw DataError("adam: gradient and state dimensions differ");
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double m_corr = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double v_corr = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  state.x.array() -= config.learning_rate * (state.m.array() / m_corr) /
                     ((state.v.array() / v_corr).sqrt() + config.epsilon);
  return state;
}

} // namespace handfit
