#pragma once

// Fixed-topology dense networks with hand-written reverse mode.
//
// Batches are stored column-major with one sample per column, so a layer is
// a single GEMM: Z = W * A + b 1^T.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfgpi/rng.hpp"

namespace mfgpi {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Activation { kRelu, kSine };

const char* to_string(Activation activation);
Activation activation_from_string(const std::string& name);

/// Weights and biases of a stack of affine maps. Shared layout for
/// parameters, gradients and optimizer moments.
template <typename Scalar>
struct ParamTensors {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t size() const;
  void set_zero();

  template <typename Other>
  bool congruent(const ParamTensors<Other>& other) const {
    if (other.weights.size() != weights.size() || other.biases.size() != biases.size()) return false;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (other.weights[k].rows() != weights[k].rows() || other.weights[k].cols() != weights[k].cols() ||
          other.biases[k].size() != biases[k].size())
        return false;
    }
    return true;
  }

  /// Weights first (layer by layer, column-major), then biases.
  VectorX<Scalar> flatten() const;
  void assign_flat(const VectorX<Scalar>& flat);
  Scalar& at(std::size_t flat_index);
  Scalar at(std::size_t flat_index) const;

  ParamTensors zeros_like() const;

  template <typename Other>
  ParamTensors<Other> cast() const {
    ParamTensors<Other> out;
    out.weights.reserve(weights.size());
    out.biases.reserve(biases.size());
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
    return out;
  }
};

/// Dense network: hidden layers use `activation`, the output layer is linear.
template <typename Scalar>
struct MlpParams : ParamTensors<Scalar> {
  Activation activation = Activation::kRelu;

  int input_dim() const { return static_cast<int>(this->weights.front().cols()); }
  int output_dim() const { return static_cast<int>(this->weights.back().rows()); }
  std::vector<int> layer_sizes() const;

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    static_cast<ParamTensors<Other>&>(out) = ParamTensors<Scalar>::template cast<Other>();
    out.activation = activation;
    return out;
  }
};

/// Accumulated partial derivatives, shape-congruent with the parameters.
template <typename Scalar>
struct GradientBuffer : ParamTensors<Scalar> {
  GradientBuffer() = default;
  explicit GradientBuffer(const ParamTensors<Scalar>& shape) : ParamTensors<Scalar>(shape.zeros_like()) {}
};

/// Zero-initialized network with the given layer sizes (input first).
template <typename Scalar>
MlpParams<Scalar> make_mlp(const std::vector<int>& layer_sizes, Activation activation = Activation::kRelu);

/// Hidden and output weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
template <typename Scalar>
void glorot_uniform_init(MlpParams<Scalar>& params, CounterRng& rng);

/// Activations cached by a batched forward pass.
template <typename Scalar>
struct MlpTape {
  std::vector<MatrixX<Scalar>> inputs;  // input to layer k, k = 0..L-1
  std::vector<MatrixX<Scalar>> pre;     // pre-activations of hidden layers (sine only)
};

template <typename Scalar>
VectorX<Scalar> mlp_forward(const MlpParams<Scalar>& params, const VectorX<Scalar>& x);

template <typename Scalar>
MatrixX<Scalar> mlp_forward_batch(const MlpParams<Scalar>& params, const MatrixX<Scalar>& x,
                                  MlpTape<Scalar>* tape = nullptr);

/// Reverse pass for the scalar sum_j upstream(:,j) . output(:,j).
/// Parameter gradients are added into `grads` when it is non-null; the
/// input gradient (one column per sample) is returned when requested.
template <typename Scalar>
MatrixX<Scalar> mlp_backward_batch(const MlpParams<Scalar>& params, const MlpTape<Scalar>& tape,
                                   const MatrixX<Scalar>& upstream, GradientBuffer<Scalar>* grads,
                                   bool want_input_grad = true);

template <typename Scalar>
struct MlpBackward {
  GradientBuffer<Scalar> grads;
  VectorX<Scalar> input_grad;
};

template <typename Scalar>
MlpBackward<Scalar> mlp_backward(const MlpParams<Scalar>& params, const VectorX<Scalar>& x,
                                 const VectorX<Scalar>& upstream);

struct RmsPropConfig {
  double smoothing = 0.99;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct RmsPropState {
  ParamTensors<Scalar> mean_square;
  double smoothing = 0.99;
  double epsilon = 1e-8;
};

template <typename Scalar>
RmsPropState<Scalar> make_rmsprop_state(const ParamTensors<Scalar>& params, const RmsPropConfig& config = {});

/// mean_square <- s*mean_square + (1-s)*g^2;
/// params <- params -/+ lr * g / (sqrt(mean_square) + eps), '+' when ascending.
template <typename Scalar>
void rmsprop_step(ParamTensors<Scalar>& params, const ParamTensors<Scalar>& grads, RmsPropState<Scalar>& state,
                  double lr, bool ascend = false);

namespace detail {

/// C = alpha * op(A) * op(B) + beta * C, backed by BLAS. C must be sized.
void gemm(bool trans_a, bool trans_b, float alpha, const MatrixX<float>& a, const MatrixX<float>& b, float beta,
          MatrixX<float>& c);
void gemm(bool trans_a, bool trans_b, double alpha, const MatrixX<double>& a, const MatrixX<double>& b,
          double beta, MatrixX<double>& c);

/// Applies MFGPI_NUM_THREADS to the BLAS backend once per process.
void configure_blas_threads();

}  // namespace detail

}  // namespace mfgpi
