#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mfgpi/measure.hpp"
#include "mfgpi/networks.hpp"
#include "mfgpi/nn.hpp"
#include "mfgpi/problem.hpp"

namespace mfgpi {

struct TrainerConfig {
  int iterations = 3000;        // I
  int inner_steps = 2;          // J
  int adversarial_steps = 1;    // K
  int ensemble_size = 50000;    // M
  int batch_size = 2500;        // |A_1| = |A_2|
  double lr_base = 0.0;         // delta_0; nonpositive selects 3 / sqrt(d)
  double lr_value_factor = 1e-3;
  double lr_control_factor = 1e-3;
  double lr_test_factor = 1e-2;
  double lr_decay = 0.01;       // learning rates scale by lr_decay^(i/I)
  RmsPropConfig rmsprop;
  int test_outputs = 1200;      // r
  double test_scale = 10.0;     // c
  int width = 0;                // nonpositive selects max(104, d + 7)
  int depth = 6;                // hidden layers
  int kernel_cap = 1024;
  bool fresh_noise = false;     // redraw zeta for every inner step
  InitialGuess initial_guess = InitialGuess::kVariantDefault;
  std::uint64_t seed = 1;

  void validate() const;
  double base_rate(int d) const;
  int network_width(int d) const;
};

struct LearningRates {
  double value;
  double control;
  double test;
};

LearningRates learning_rates(const TrainerConfig& config, int d, std::int64_t iteration);

struct MetricsRecord {
  std::int64_t iteration = 0;
  double pe_loss = std::numeric_limits<double>::quiet_NaN();
  double pi_objective = std::numeric_limits<double>::quiet_NaN();
  double re1 = std::numeric_limits<double>::quiet_NaN();
  double reinf = std::numeric_limits<double>::quiet_NaN();
  double rc = std::numeric_limits<double>::quiet_NaN();
  double j_hat = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
};

template <typename Scalar>
struct Networks {
  ControlNet<Scalar> control;
  ValueNet<Scalar> value;
  TestNet<Scalar> test;

  template <typename Other>
  Networks<Other> cast() const {
    return Networks<Other>{control.template cast<Other>(), value.template cast<Other>(),
                           test.template cast<Other>()};
  }
};

template <typename Scalar>
Networks<Scalar> make_networks(const MfgProblem& problem, const TrainerConfig& config);

// ---------------------------------------------------------------------------
// Martingale increment and the mini-batch estimator

struct MartingaleTerm {
  int particle = 0;
  double hf = 0.0;
  double v_next = 0.0;
  double v_here = 0.0;
  bool active = false;

  double value() const { return active ? hf + v_next - v_here : 0.0; }
};

/// Single-sample increment active * (h f + v(destination) - v(x)).
template <typename Scalar>
MartingaleTerm martingale_increment(const MfgProblem& problem, const BucketStats& stats, const StateSample& x,
                                    const StateSample& destination, const ControlNet<Scalar>& control,
                                    const ValueNet<Scalar>& value);

/// (1/n) sum_j rho_j * M_j. An empty `test_values` matrix stands for the
/// constant test function 1 and yields a one-entry vector.
template <typename Scalar>
VectorX<Scalar> weighted_loss(const VectorX<Scalar>& increments, const MatrixX<Scalar>& test_values);

/// The selected particles of one outer iteration with their transition
/// noise frozen. Columns [0, B) hold A_1, columns [B, 2B) hold A_2.
struct FrozenBatch {
  const MfgProblem* problem = nullptr;
  const BucketStats* stats = nullptr;
  int batch_size = 0;
  std::vector<int> particles;
  std::vector<int> time_index;
  Eigen::MatrixXd z;      // d x 2B
  Eigen::MatrixXd zeta;   // q x 2B, zero where the source is terminal
  Eigen::MatrixXd reset;  // d x 2B, zero where the source is not terminal

  int columns() const { return static_cast<int>(particles.size()); }
};

FrozenBatch freeze_batch(const MfgProblem& problem, const BucketStats& stats, const ParticleEnsemble& ensemble,
                         const std::vector<int>& first, const std::vector<int>& second, std::uint64_t salt = 0);

/// Destinations of the frozen batch under a control network.
template <typename Scalar>
std::vector<Transition> batch_transitions(const FrozenBatch& batch, const ControlNet<Scalar>& control);

template <typename Scalar>
struct Objectives {
  Scalar pe = 0;                // L(A_1) . L(A_2)
  Scalar pi = 0;                // L(1; A_1 u A_2)
  VectorX<Scalar> first_loss;   // L(A_1), r entries
  VectorX<Scalar> second_loss;  // L(A_2)
  VectorX<Scalar> increments;   // M_j, 2B entries
};

template <typename Scalar>
Objectives<Scalar> evaluate_objectives(const FrozenBatch& batch, const Networks<Scalar>& nets);

/// d(pe)/d(theta). No gradient reaches theta through terminal values.
template <typename Scalar>
GradientBuffer<Scalar> pe_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets);

/// d(pi)/d(alpha), pathwise through the frozen transitions.
template <typename Scalar>
GradientBuffer<Scalar> pi_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets);

/// d(pe)/d(W, b) of the test network.
template <typename Scalar>
GradientBuffer<Scalar> adversarial_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets);

// ---------------------------------------------------------------------------
// Algorithm 1

struct TrainerState {
  Networks<float> nets;
  RmsPropState<float> value_opt;
  RmsPropState<float> control_opt;
  RmsPropState<float> test_opt;
  ParticleEnsemble ensemble;
};

TrainerState initial_trainer_state(const MfgProblem& problem, const TrainerConfig& config);

struct StepLosses {
  double pe_loss = std::numeric_limits<double>::quiet_NaN();  // |L(A_1) . L(A_2)| before the ascent step
  double pi_objective = std::numeric_limits<double>::quiet_NaN();
};

class PolicyIteration {
 public:
  using Observer = std::function<void(const PolicyIteration&)>;

  PolicyIteration(MfgProblem problem, TrainerConfig config);
  PolicyIteration(MfgProblem problem, TrainerConfig config, TrainerState state);

  /// One outer iteration; throws DivergenceError on non-finite losses.
  void step();
  /// Steps until the configured iteration count. The observer sees the
  /// state before the first step and after every step.
  void run(const Observer& observer = {});

  std::int64_t iteration() const { return state_.ensemble.iteration; }
  const MfgProblem& problem() const { return problem_; }
  const TrainerConfig& config() const { return config_; }
  const TrainerState& state() const { return state_; }
  const Networks<float>& nets() const { return state_.nets; }
  const ParticleEnsemble& ensemble() const { return state_.ensemble; }
  const StepLosses& last_losses() const { return losses_; }
  /// Bucket statistics of the current ensemble, as used by the next step.
  BucketStats current_stats() const;

 private:
  MfgProblem problem_;
  TrainerConfig config_;
  TrainerState state_;
  StepLosses losses_;
};

}  // namespace mfgpi
