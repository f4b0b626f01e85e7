#include "mfgpi/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <string>

#include "mfgpi/errors.hpp"

namespace mfgpi {

const char* to_string(Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSine:
      return "sine";
  }
  return "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sine") return Activation::kSine;
  throw ConfigError("unknown activation '" + name + "'");
}

template <typename Scalar>
std::size_t ParamTensors<Scalar>::size() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

template <typename Scalar>
void ParamTensors<Scalar>::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

template <typename Scalar>
VectorX<Scalar> ParamTensors<Scalar>::flatten() const {
  VectorX<Scalar> flat(static_cast<Eigen::Index>(size()));
  Eigen::Index offset = 0;
  for (const auto& w : weights) {
    flat.segment(offset, w.size()) = w.reshaped();
    offset += w.size();
  }
  for (const auto& b : biases) {
    flat.segment(offset, b.size()) = b;
    offset += b.size();
  }
  return flat;
}

template <typename Scalar>
void ParamTensors<Scalar>::assign_flat(const VectorX<Scalar>& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) throw ShapeError("flat parameter vector has wrong length");
  Eigen::Index offset = 0;
  for (auto& w : weights) {
    w.reshaped() = flat.segment(offset, w.size());
    offset += w.size();
  }
  for (auto& b : biases) {
    b = flat.segment(offset, b.size());
    offset += b.size();
  }
}

template <typename Scalar>
Scalar& ParamTensors<Scalar>::at(std::size_t flat_index) {
  std::size_t offset = 0;
  for (auto& w : weights) {
    const auto n = static_cast<std::size_t>(w.size());
    if (flat_index < offset + n) return w.data()[flat_index - offset];
    offset += n;
  }
  for (auto& b : biases) {
    const auto n = static_cast<std::size_t>(b.size());
    if (flat_index < offset + n) return b.data()[flat_index - offset];
    offset += n;
  }
  throw IndexError("parameter index out of range");
}

template <typename Scalar>
Scalar ParamTensors<Scalar>::at(std::size_t flat_index) const {
  return const_cast<ParamTensors*>(this)->at(flat_index);
}

template <typename Scalar>
ParamTensors<Scalar> ParamTensors<Scalar>::zeros_like() const {
  ParamTensors out;
  out.weights.reserve(weights.size());
  out.biases.reserve(biases.size());
  for (const auto& w : weights) out.weights.push_back(MatrixX<Scalar>::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) out.biases.push_back(VectorX<Scalar>::Zero(b.size()));
  return out;
}

template <typename Scalar>
std::vector<int> MlpParams<Scalar>::layer_sizes() const {
  std::vector<int> sizes;
  if (this->weights.empty()) return sizes;
  sizes.push_back(static_cast<int>(this->weights.front().cols()));
  for (const auto& w : this->weights) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

template <typename Scalar>
MlpParams<Scalar> make_mlp(const std::vector<int>& layer_sizes, Activation activation) {
  if (layer_sizes.size() < 2) throw ShapeError("an MLP needs at least an input and an output size");
  for (int s : layer_sizes) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  MlpParams<Scalar> params;
  params.activation = activation;
  for (std::size_t k = 1; k < layer_sizes.size(); ++k) {
    params.weights.push_back(MatrixX<Scalar>::Zero(layer_sizes[k], layer_sizes[k - 1]));
    params.biases.push_back(VectorX<Scalar>::Zero(layer_sizes[k]));
  }
  return params;
}

template <typename Scalar>
void glorot_uniform_init(MlpParams<Scalar>& params, CounterRng& rng) {
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    auto& w = params.weights[k];
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    // Column-major fill order keeps the draw sequence independent of Eigen internals.
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
    params.biases[k].setZero();
  }
}

namespace {

template <typename Scalar>
void check_input(const MlpParams<Scalar>& params, Eigen::Index rows) {
  if (params.weights.empty()) throw ShapeError("network has no layers");
  if (rows != params.weights.front().cols())
    throw ShapeError("input dimension " + std::to_string(rows) + " does not match network input " +
                     std::to_string(params.weights.front().cols()));
}

}  // namespace

template <typename Scalar>
MatrixX<Scalar> mlp_forward_batch(const MlpParams<Scalar>& params, const MatrixX<Scalar>& x, MlpTape<Scalar>* tape) {
  check_input(params, x.rows());
  const std::size_t layers = params.weights.size();
  if (tape != nullptr) {
    tape->inputs.resize(layers);
    tape->pre.resize(params.activation == Activation::kSine ? layers - 1 : 0);
  }
  MatrixX<Scalar> current = x;
  for (std::size_t k = 0; k < layers; ++k) {
    const auto& w = params.weights[k];
    MatrixX<Scalar> z(w.rows(), current.cols());
    detail::gemm(false, false, Scalar(1), w, current, Scalar(0), z);
    z.colwise() += params.biases[k];
    if (tape != nullptr) tape->inputs[k] = std::move(current);
    if (k + 1 == layers) return z;
    if (params.activation == Activation::kSine) {
      current = z.array().sin().matrix();
      if (tape != nullptr) tape->pre[k] = std::move(z);
    } else {
      current = z.cwiseMax(Scalar(0));
    }
  }
  return current;  // unreachable
}

template <typename Scalar>
VectorX<Scalar> mlp_forward(const MlpParams<Scalar>& params, const VectorX<Scalar>& x) {
  const MatrixX<Scalar> out = mlp_forward_batch(params, MatrixX<Scalar>(x));
  return out.col(0);
}

template <typename Scalar>
MatrixX<Scalar> mlp_backward_batch(const MlpParams<Scalar>& params, const MlpTape<Scalar>& tape,
                                   const MatrixX<Scalar>& upstream, GradientBuffer<Scalar>* grads,
                                   bool want_input_grad) {
  const std::size_t layers = params.weights.size();
  if (tape.inputs.size() != layers) throw ShapeError("tape does not belong to this network");
  if (upstream.rows() != params.weights.back().rows() || upstream.cols() != tape.inputs.front().cols())
    throw ShapeError("upstream gradient shape does not match network output");
  if (grads != nullptr && !grads->congruent(params)) throw ShapeError("gradient buffer is not congruent");

  MatrixX<Scalar> g = upstream;
  for (std::size_t k = layers; k-- > 0;) {
    const auto& input = tape.inputs[k];
    if (grads != nullptr) {
      detail::gemm(false, true, Scalar(1), g, input, Scalar(1), grads->weights[k]);
      grads->biases[k] += g.rowwise().sum();
    }
    if (k == 0 && !want_input_grad) return {};
    MatrixX<Scalar> prev(params.weights[k].cols(), g.cols());
    detail::gemm(true, false, Scalar(1), params.weights[k], g, Scalar(0), prev);
    if (k > 0) {
      if (params.activation == Activation::kSine) {
        prev.array() *= tape.pre[k - 1].array().cos();
      } else {
        // relu(z) > 0 exactly when z > 0; the subgradient at 0 is 0.
        prev.array() *= (input.array() > Scalar(0)).template cast<Scalar>();
      }
    }
    g = std::move(prev);
  }
  return g;
}

template <typename Scalar>
MlpBackward<Scalar> mlp_backward(const MlpParams<Scalar>& params, const VectorX<Scalar>& x,
                                 const VectorX<Scalar>& upstream) {
  if (upstream.size() != params.output_dim()) throw ShapeError("upstream dimension does not match output");
  MlpTape<Scalar> tape;
  mlp_forward_batch(params, MatrixX<Scalar>(x), &tape);
  MlpBackward<Scalar> out{GradientBuffer<Scalar>(params), {}};
  const MatrixX<Scalar> input_grad = mlp_backward_batch(params, tape, MatrixX<Scalar>(upstream), &out.grads, true);
  out.input_grad = input_grad.col(0);
  return out;
}

template <typename Scalar>
RmsPropState<Scalar> make_rmsprop_state(const ParamTensors<Scalar>& params, const RmsPropConfig& config) {
  if (!(config.smoothing > 0.0 && config.smoothing < 1.0)) throw ConfigError("rmsprop smoothing must be in (0,1)");
  if (!(config.epsilon > 0.0)) throw ConfigError("rmsprop epsilon must be positive");
  return RmsPropState<Scalar>{params.zeros_like(), config.smoothing, config.epsilon};
}

template <typename Scalar>
void rmsprop_step(ParamTensors<Scalar>& params, const ParamTensors<Scalar>& grads, RmsPropState<Scalar>& state,
                  double lr, bool ascend) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!params.congruent(grads) || !params.congruent(state.mean_square))
    throw ShapeError("rmsprop containers are not shape-congruent");
  const Scalar s = static_cast<Scalar>(state.smoothing);
  const Scalar one_minus_s = static_cast<Scalar>(1.0 - state.smoothing);
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  const Scalar step = static_cast<Scalar>(ascend ? lr : -lr);
  auto update = [&](auto& p, const auto& g, auto& ms) {
    ms.array() = s * ms.array() + one_minus_s * g.array().square();
    p.array() += step * g.array() / (ms.array().sqrt() + eps);
  };
  for (std::size_t k = 0; k < params.weights.size(); ++k)
    update(params.weights[k], grads.weights[k], state.mean_square.weights[k]);
  for (std::size_t k = 0; k < params.biases.size(); ++k)
    update(params.biases[k], grads.biases[k], state.mean_square.biases[k]);
}

namespace detail {

namespace {

template <typename Scalar>
void check_gemm(bool ta, bool tb, const MatrixX<Scalar>& a, const MatrixX<Scalar>& b, const MatrixX<Scalar>& c,
                int& m, int& n, int& k) {
  m = static_cast<int>(ta ? a.cols() : a.rows());
  k = static_cast<int>(ta ? a.rows() : a.cols());
  const int kb = static_cast<int>(tb ? b.cols() : b.rows());
  n = static_cast<int>(tb ? b.rows() : b.cols());
  if (k != kb || c.rows() != m || c.cols() != n) throw ShapeError("gemm operand shapes do not compose");
}

}  // namespace

void gemm(bool trans_a, bool trans_b, float alpha, const MatrixX<float>& a, const MatrixX<float>& b, float beta,
          MatrixX<float>& c) {
  int m = 0, n = 0, k = 0;
  check_gemm(trans_a, trans_b, a, b, c, m, n, k);
  if (m == 0 || n == 0) return;
  if (k == 0) {
    c *= beta;
    return;
  }
  cblas_sgemm(CblasColMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a.data(), static_cast<int>(a.rows()), b.data(), static_cast<int>(b.rows()), beta, c.data(),
              static_cast<int>(c.rows()));
}

void gemm(bool trans_a, bool trans_b, double alpha, const MatrixX<double>& a, const MatrixX<double>& b, double beta,
          MatrixX<double>& c) {
  int m = 0, n = 0, k = 0;
  check_gemm(trans_a, trans_b, a, b, c, m, n, k);
  if (m == 0 || n == 0) return;
  if (k == 0) {
    c *= beta;
    return;
  }
  cblas_dgemm(CblasColMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a.data(), static_cast<int>(a.rows()), b.data(), static_cast<int>(b.rows()), beta, c.data(),
              static_cast<int>(c.rows()));
}

void configure_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (const char* env = std::getenv("MFGPI_NUM_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) openblas_set_num_threads(n);
    }
  });
}

}  // namespace detail

#define MFGPI_INSTANTIATE_NN(Scalar)                                                                              \
  template struct ParamTensors<Scalar>;                                                                           \
  template struct MlpParams<Scalar>;                                                                              \
  template MlpParams<Scalar> make_mlp<Scalar>(const std::vector<int>&, Activation);                               \
  template void glorot_uniform_init<Scalar>(MlpParams<Scalar>&, CounterRng&);                                     \
  template VectorX<Scalar> mlp_forward<Scalar>(const MlpParams<Scalar>&, const VectorX<Scalar>&);                 \
  template MatrixX<Scalar> mlp_forward_batch<Scalar>(const MlpParams<Scalar>&, const MatrixX<Scalar>&,            \
                                                     MlpTape<Scalar>*);                                           \
  template MatrixX<Scalar> mlp_backward_batch<Scalar>(const MlpParams<Scalar>&, const MlpTape<Scalar>&,           \
                                                      const MatrixX<Scalar>&, GradientBuffer<Scalar>*, bool);     \
  template MlpBackward<Scalar> mlp_backward<Scalar>(const MlpParams<Scalar>&, const VectorX<Scalar>&,             \
                                                    const VectorX<Scalar>&);                                      \
  template RmsPropState<Scalar> make_rmsprop_state<Scalar>(const ParamTensors<Scalar>&, const RmsPropConfig&);    \
  template void rmsprop_step<Scalar>(ParamTensors<Scalar>&, const ParamTensors<Scalar>&, RmsPropState<Scalar>&,   \
                                     double, bool);

MFGPI_INSTANTIATE_NN(float)
MFGPI_INSTANTIATE_NN(double)

#undef MFGPI_INSTANTIATE_NN

}  // namespace mfgpi
