#include "mfgpi/networks.hpp"

#include <cmath>
#include <numbers>

#include "mfgpi/errors.hpp"

namespace mfgpi {

template <typename Scalar>
MatrixX<Scalar> encode_inputs(std::span<const int> time_index, const Eigen::MatrixXd& z, double h) {
  if (static_cast<Eigen::Index>(time_index.size()) != z.cols()) throw ShapeError("time indices and states disagree");
  MatrixX<Scalar> x(z.rows() + 1, z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    x(0, j) = static_cast<Scalar>(time_index[j] * h);
    x.col(j).tail(z.rows()) = z.col(j).template cast<Scalar>();
  }
  return x;
}

template <typename Scalar>
VectorX<Scalar> encode_input(const StateSample& x, double h) {
  VectorX<Scalar> v(x.z.size() + 1);
  v(0) = static_cast<Scalar>(x.time_index * h);
  v.tail(x.z.size()) = x.z.template cast<Scalar>();
  return v;
}

namespace {

std::vector<int> hidden_sizes(int input, int width, int depth, int output) {
  if (width <= 0 || depth < 0) throw ConfigError("network width must be positive and depth nonnegative");
  std::vector<int> sizes{input};
  for (int k = 0; k < depth; ++k) sizes.push_back(width);
  sizes.push_back(output);
  return sizes;
}

}  // namespace

template <typename Scalar>
ControlNet<Scalar> make_control_net(const MfgProblem& problem, int width, int depth, CounterRng& rng) {
  ControlNet<Scalar> net;
  net.inner = make_mlp<Scalar>(hidden_sizes(problem.d + 1, width, depth, problem.m));
  glorot_uniform_init(net.inner, rng);
  net.lower = problem.control_lower;
  net.upper = problem.control_upper;
  if ((net.lower.array() > net.upper.array()).any()) throw ConfigError("control box has lower > upper");
  net.time_step = problem.h();
  return net;
}

template <typename Scalar>
ValueNet<Scalar> make_value_net(const MfgProblem& problem, int width, int depth, CounterRng& rng) {
  ValueNet<Scalar> net;
  net.inner = make_mlp<Scalar>(hidden_sizes(problem.d + 1, width, depth, 1));
  glorot_uniform_init(net.inner, rng);
  net.terminal_cost = problem.terminal_cost;
  net.time_step = problem.h();
  net.steps = problem.N;
  return net;
}

template <typename Scalar>
VectorX<Scalar> test_scales(int outputs, double scale_c) {
  VectorX<Scalar> c(outputs);
  for (int j = 0; j < outputs; ++j) c(j) = static_cast<Scalar>(1.0 + j * scale_c);
  return c;
}

template <typename Scalar>
TestNet<Scalar> make_test_net(int d, int outputs, double scale_c, double time_step, CounterRng& rng) {
  if (outputs <= 0) throw ConfigError("test network needs a positive output dimension");
  if (!(scale_c > 0.0)) throw ConfigError("test network scale must be positive");
  TestNet<Scalar> net;
  MatrixX<Scalar> w(outputs, d + 1);
  VectorX<Scalar> b(outputs);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d + 1));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(sd * rng.normal());
  for (int i = 0; i < outputs; ++i) b(i) = static_cast<Scalar>(rng.uniform(0.0, 2.0 * std::numbers::pi));
  net.eta.weights.push_back(std::move(w));
  net.eta.biases.push_back(std::move(b));
  net.scales = test_scales<Scalar>(outputs, scale_c);
  net.scale_c = scale_c;
  net.time_step = time_step;
  return net;
}

template <typename Scalar>
ControlForward<Scalar> control_forward(const ControlNet<Scalar>& net, const MatrixX<Scalar>& inputs, bool keep_tape) {
  ControlForward<Scalar> out;
  out.raw = mlp_forward_batch(net.inner, inputs, keep_tape ? &out.tape : nullptr);
  out.u = out.raw;
  for (Eigen::Index i = 0; i < out.u.rows(); ++i) {
    const Scalar lo = static_cast<Scalar>(net.lower(i));
    const Scalar hi = static_cast<Scalar>(net.upper(i));
    out.u.row(i) = out.u.row(i).cwiseMax(lo).cwiseMin(hi);
  }
  return out;
}

template <typename Scalar>
void control_backward(const ControlNet<Scalar>& net, const ControlForward<Scalar>& forward,
                      const MatrixX<Scalar>& upstream_u, GradientBuffer<Scalar>& grads) {
  MatrixX<Scalar> g = upstream_u;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Scalar lo = static_cast<Scalar>(net.lower(i));
    const Scalar hi = static_cast<Scalar>(net.upper(i));
    auto raw = forward.raw.row(i).array();
    g.row(i).array() *= ((raw >= lo) && (raw <= hi)).template cast<Scalar>();
  }
  mlp_backward_batch(net.inner, forward.tape, g, &grads, false);
}

template <typename Scalar>
Eigen::VectorXd control_eval(const ControlNet<Scalar>& net, const StateSample& x) {
  const MatrixX<Scalar> input = encode_input<Scalar>(x, net.time_step);
  return control_forward(net, input, false).u.col(0).template cast<double>();
}

template <typename Scalar>
double value_eval(const ValueNet<Scalar>& net, const StateSample& x, const BucketStats* stats) {
  if (x.time_index < 0 || x.time_index > net.steps) throw IndexError("time index outside the grid");
  if (x.time_index == net.steps) {
    if (stats == nullptr) throw MeasureError("terminal value requires bucket statistics");
    return net.terminal_cost(PointEval{x.time_index, x.time_index * net.time_step, x.z, *stats});
  }
  return static_cast<double>(mlp_forward(net.inner, encode_input<Scalar>(x, net.time_step))(0));
}

template <typename Scalar>
TestForward<Scalar> test_forward(const TestNet<Scalar>& net, const MatrixX<Scalar>& inputs) {
  if (inputs.rows() != net.weight().cols()) throw ShapeError("test network input dimension mismatch");
  TestForward<Scalar> out;
  out.scaled.resize(net.weight().rows(), inputs.cols());
  detail::gemm(false, false, Scalar(1), net.weight(), inputs, Scalar(0), out.scaled);
  out.scaled.colwise() += net.bias();
  out.scaled = net.scales.asDiagonal() * out.scaled;
  out.values = out.scaled.array().sin().matrix();
  return out;
}

template <typename Scalar>
void test_backward(const TestNet<Scalar>& net, const TestForward<Scalar>& forward, const MatrixX<Scalar>& inputs,
                   const MatrixX<Scalar>& upstream, GradientBuffer<Scalar>& grads) {
  if (!grads.congruent(net.eta)) throw ShapeError("gradient buffer does not match the test network");
  MatrixX<Scalar> g = (upstream.array() * forward.scaled.array().cos()).matrix();
  g = net.scales.asDiagonal() * g;
  detail::gemm(false, true, Scalar(1), g, inputs, Scalar(1), grads.weights.front());
  grads.biases.front() += g.rowwise().sum();
}

template <typename Scalar>
Eigen::VectorXd test_eval(const TestNet<Scalar>& net, const StateSample& x) {
  const MatrixX<Scalar> input = encode_input<Scalar>(x, net.time_step);
  return test_forward(net, input).values.col(0).template cast<double>();
}

#define MFGPI_INSTANTIATE_NETWORKS(Scalar)                                                                          \
  template MatrixX<Scalar> encode_inputs<Scalar>(std::span<const int>, const Eigen::MatrixXd&, double);             \
  template VectorX<Scalar> encode_input<Scalar>(const StateSample&, double);                                        \
  template ControlNet<Scalar> make_control_net<Scalar>(const MfgProblem&, int, int, CounterRng&);                   \
  template ValueNet<Scalar> make_value_net<Scalar>(const MfgProblem&, int, int, CounterRng&);                       \
  template TestNet<Scalar> make_test_net<Scalar>(int, int, double, double, CounterRng&);                            \
  template VectorX<Scalar> test_scales<Scalar>(int, double);                                                        \
  template Eigen::VectorXd control_eval<Scalar>(const ControlNet<Scalar>&, const StateSample&);                     \
  template double value_eval<Scalar>(const ValueNet<Scalar>&, const StateSample&, const BucketStats*);              \
  template Eigen::VectorXd test_eval<Scalar>(const TestNet<Scalar>&, const StateSample&);                           \
  template ControlForward<Scalar> control_forward<Scalar>(const ControlNet<Scalar>&, const MatrixX<Scalar>&, bool); \
  template void control_backward<Scalar>(const ControlNet<Scalar>&, const ControlForward<Scalar>&,                  \
                                         const MatrixX<Scalar>&, GradientBuffer<Scalar>&);                          \
  template TestForward<Scalar> test_forward<Scalar>(const TestNet<Scalar>&, const MatrixX<Scalar>&);                \
  template void test_backward<Scalar>(const TestNet<Scalar>&, const TestForward<Scalar>&, const MatrixX<Scalar>&,   \
                                      const MatrixX<Scalar>&, GradientBuffer<Scalar>&);

MFGPI_INSTANTIATE_NETWORKS(float)
MFGPI_INSTANTIATE_NETWORKS(double)

#undef MFGPI_INSTANTIATE_NETWORKS

}  // namespace mfgpi
