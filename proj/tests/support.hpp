#pragma once

// Small fixtures shared by the unit and acceptance tests.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "mfgpi/problem.hpp"
#include "mfgpi/trainer.hpp"

namespace mfgpi::testing {

/// dz = b dt + sigma dW with constant b and sigma, zero costs, N steps.
inline MfgProblem constant_coefficient_problem(const Eigen::VectorXd& b, const Eigen::MatrixXd& sigma, int steps = 10) {
  MfgProblem p = make_problem(Variant::kLq1, static_cast<int>(b.size()), {}, steps);
  p.q = static_cast<int>(sigma.cols());
  p.drift = [b](const PointEval&, const ConstVecRef&, VecOut out) { out = b; };
  p.diffusion = [sigma](const PointEval&, const ConstVecRef&, MatOut out) { out = sigma; };
  p.running_cost = [](const PointEval&, const ConstVecRef&) { return 0.0; };
  p.terminal_cost = [](const PointEval&) { return 0.0; };
  p.running_cost_grad_u = [](const PointEval&, const ConstVecRef&, VecOut out) { out.setZero(); };
  p.drift_vjp_u = [](const PointEval&, const ConstVecRef&, const ConstVecRef&, VecOut out) { out.setZero(); };
  p.terminal_cost_grad_z = [](const PointEval&, VecOut out) { out.setZero(); };
  return p;
}

/// A trainer configuration small enough for unit tests.
inline TrainerConfig small_config(int M = 200, int batch = 20) {
  TrainerConfig config;
  config.iterations = 10;
  config.ensemble_size = M;
  config.batch_size = batch;
  config.width = 12;
  config.depth = 2;
  config.test_outputs = 5;
  config.test_scale = 1.0;
  config.kernel_cap = 64;
  return config;
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_gap(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace mfgpi::testing
