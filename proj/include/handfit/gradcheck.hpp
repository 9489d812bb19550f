#pragma once

#include "handfit/energy.hpp"

#include <cstdint>

namespace handfit {

/// One random objective: a pose to differentiate at plus everything it is compared to.
struct GradcheckProblem {
  HandParams params;
  HandParams init;
  Keypoints keypoints = Keypoints::Zero();
  Confidences confidences = Confidences::Ones();
  Reprojection reprojection;
  EnergyWeights weights;
  ResidualNormalization normalization = ResidualNormalization::mean;
};

/// Deterministic in (seed, index). Even indices use a perspective camera, odd ones a
/// weak camera. Quaternions are left unnormalized on purpose. Poses that sit within a
/// small relative margin of a twist kink are redrawn, since the energy has no
/// derivative there.
GradcheckProblem gradcheck_problem(const HandModel& model, std::uint64_t seed, int index);

struct GradcheckOutcome {
  int trials = 0;
  double worst_error = 0.0;
  int worst_trial = -1;
  int worst_coordinate = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int failures = 0;
};

/// Analytic gradient against central differences of the energy value, per coordinate
/// relative error, skipping coordinates where both magnitudes are below `floor`.
GradcheckOutcome run_gradcheck(const HandModel& model,
                               int trials,
                               double eps,
                               double tol,
                               std::uint64_t seed,
                               double floor = 1e-8);

/// Human-readable name of a flat parameter coordinate, e.g. "theta[3].x" or "beta[2]".
std::string parameter_name(int coordinate);

} // namespace handfit
