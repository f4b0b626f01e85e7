#pragma once

#include <functional>
#include <span>

#include <Eigen/Core>

#include "mfgpi/nn.hpp"
#include "mfgpi/problem.hpp"

namespace mfgpi {

/// Network inputs x = (t, z), one column per sample, with t = n*h.
template <typename Scalar>
MatrixX<Scalar> encode_inputs(std::span<const int> time_index, const Eigen::MatrixXd& z, double h);

template <typename Scalar>
VectorX<Scalar> encode_input(const StateSample& x, double h);

/// Feedback control u(x) = clamp(psi(x), lower, upper), componentwise.
template <typename Scalar>
struct ControlNet {
  MlpParams<Scalar> inner;
  Eigen::VectorXd lower;  // may hold -inf
  Eigen::VectorXd upper;  // may hold +inf
  double time_step = 0.01;

  int control_dim() const { return inner.output_dim(); }

  template <typename Other>
  ControlNet<Other> cast() const {
    return ControlNet<Other>{inner.template cast<Other>(), lower, upper, time_step};
  }
};

/// Value network: phi(x) before the horizon, the terminal cost g(x, mu) at
/// time index N. The terminal branch carries no parameter dependence.
template <typename Scalar>
struct ValueNet {
  MlpParams<Scalar> inner;
  std::function<double(const PointEval&)> terminal_cost;
  double time_step = 0.01;
  int steps = 100;

  template <typename Other>
  ValueNet<Other> cast() const {
    return ValueNet<Other>{inner.template cast<Other>(), terminal_cost, time_step, steps};
  }
};

/// Multiscale sine test functions rho(x) = sin(Lambda(W x + b)) with fixed
/// scales c_j = 1 + (j-1) * scale_c. Only (W, b) is trainable; it is stored
/// as a single-layer ParamTensors so the optimizer can treat it uniformly.
template <typename Scalar>
struct TestNet {
  ParamTensors<Scalar> eta;
  VectorX<Scalar> scales;
  double scale_c = 10.0;
  double time_step = 0.01;

  int outputs() const { return static_cast<int>(scales.size()); }
  const MatrixX<Scalar>& weight() const { return eta.weights.front(); }
  const VectorX<Scalar>& bias() const { return eta.biases.front(); }

  template <typename Other>
  TestNet<Other> cast() const {
    return TestNet<Other>{eta.template cast<Other>(), scales.template cast<Other>(), scale_c, time_step};
  }
};

/// psi has `depth` hidden ReLU layers of `width` units.
template <typename Scalar>
ControlNet<Scalar> make_control_net(const MfgProblem& problem, int width, int depth, CounterRng& rng);

template <typename Scalar>
ValueNet<Scalar> make_value_net(const MfgProblem& problem, int width, int depth, CounterRng& rng);

/// W entries N(0, 1/(1+d)), b uniform in [0, 2 pi).
template <typename Scalar>
TestNet<Scalar> make_test_net(int d, int outputs, double scale_c, double time_step, CounterRng& rng);

template <typename Scalar>
VectorX<Scalar> test_scales(int outputs, double scale_c);

template <typename Scalar>
Eigen::VectorXd control_eval(const ControlNet<Scalar>& net, const StateSample& x);

/// Throws MeasureError when the terminal branch is reached without statistics.
template <typename Scalar>
double value_eval(const ValueNet<Scalar>& net, const StateSample& x, const BucketStats* stats);

template <typename Scalar>
Eigen::VectorXd test_eval(const TestNet<Scalar>& net, const StateSample& x);

// Batched forms used by the trainer.

template <typename Scalar>
struct ControlForward {
  MatrixX<Scalar> raw;  // psi(x)
  MatrixX<Scalar> u;    // clamped
  MlpTape<Scalar> tape;
};

template <typename Scalar>
ControlForward<Scalar> control_forward(const ControlNet<Scalar>& net, const MatrixX<Scalar>& inputs,
                                       bool keep_tape);

/// Pulls d(objective)/du back to the parameters of psi. The clamp passes the
/// gradient where lower <= psi <= upper and blocks it outside.
template <typename Scalar>
void control_backward(const ControlNet<Scalar>& net, const ControlForward<Scalar>& forward,
                      const MatrixX<Scalar>& upstream_u, GradientBuffer<Scalar>& grads);

template <typename Scalar>
struct TestForward {
  MatrixX<Scalar> scaled;  // Lambda(W x + b)
  MatrixX<Scalar> values;  // sin(scaled)
};

template <typename Scalar>
TestForward<Scalar> test_forward(const TestNet<Scalar>& net, const MatrixX<Scalar>& inputs);

/// Gradient of sum_j upstream(:,j) . rho(x_j) with respect to (W, b).
template <typename Scalar>
void test_backward(const TestNet<Scalar>& net, const TestForward<Scalar>& forward, const MatrixX<Scalar>& inputs,
                   const MatrixX<Scalar>& upstream, GradientBuffer<Scalar>& grads);

}  // namespace mfgpi
