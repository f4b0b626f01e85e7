#include "mfgpi/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "mfgpi/errors.hpp"

namespace mfgpi {

void TrainerConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (inner_steps < 0 || adversarial_steps < 0) throw ConfigError("inner loop counts must be nonnegative");
  if (ensemble_size <= 0) throw ConfigError("ensemble_size must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (2LL * batch_size > ensemble_size) throw ConfigError("two batches of batch_size exceed ensemble_size");
  if (!(lr_value_factor > 0.0) || !(lr_control_factor > 0.0) || !(lr_test_factor > 0.0))
    throw ConfigError("learning rate factors must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(rmsprop.smoothing > 0.0 && rmsprop.smoothing < 1.0)) throw ConfigError("rmsprop smoothing must be in (0, 1)");
  if (!(rmsprop.epsilon > 0.0)) throw ConfigError("rmsprop epsilon must be positive");
  if (test_outputs <= 0) throw ConfigError("test_outputs must be positive");
  if (!(test_scale > 0.0)) throw ConfigError("test_scale must be positive");
  if (depth < 0) throw ConfigError("depth must be nonnegative");
  if (kernel_cap < 0) throw ConfigError("kernel_cap must be nonnegative");
}

double TrainerConfig::base_rate(int d) const { return lr_base > 0.0 ? lr_base : 3.0 / std::sqrt(double(d)); }

int TrainerConfig::network_width(int d) const { return width > 0 ? width : std::max(104, d + 7); }

LearningRates learning_rates(const TrainerConfig& config, int d, std::int64_t iteration) {
  const double progress = config.iterations > 0 ? double(iteration) / config.iterations : 0.0;
  const double base = config.base_rate(d) * std::pow(config.lr_decay, progress);
  return {base * config.lr_value_factor, base * config.lr_control_factor, base * config.lr_test_factor};
}

template <typename Scalar>
Networks<Scalar> make_networks(const MfgProblem& problem, const TrainerConfig& config) {
  const int width = config.network_width(problem.d);
  CounterRng control_rng(config.seed, StreamKind::kParameterInit, 0);
  CounterRng value_rng(config.seed, StreamKind::kParameterInit, 1);
  CounterRng test_rng(config.seed, StreamKind::kParameterInit, 2);
  return Networks<Scalar>{
      make_control_net<Scalar>(problem, width, config.depth, control_rng),
      make_value_net<Scalar>(problem, width, config.depth, value_rng),
      make_test_net<Scalar>(problem.d, config.test_outputs, config.test_scale, problem.h(), test_rng)};
}

template <typename Scalar>
MartingaleTerm martingale_increment(const MfgProblem& problem, const BucketStats& stats, const StateSample& x,
                                    const StateSample& destination, const ControlNet<Scalar>& control,
                                    const ValueNet<Scalar>& value) {
  MartingaleTerm term;
  if (x.time_index >= problem.N) return term;
  term.active = true;
  const Eigen::VectorXd u = control_eval(control, x);
  term.hf = problem.h() * problem.running_cost(PointEval{x.time_index, problem.time(x.time_index), x.z, stats}, u);
  term.v_here = value_eval(value, x, &stats);
  term.v_next = value_eval(value, destination, &stats);
  return term;
}

template <typename Scalar>
VectorX<Scalar> weighted_loss(const VectorX<Scalar>& increments, const MatrixX<Scalar>& test_values) {
  if (increments.size() == 0) throw ConfigError("loss estimator needs a nonempty batch");
  const Scalar n = static_cast<Scalar>(increments.size());
  if (test_values.size() == 0) return VectorX<Scalar>::Constant(1, increments.sum() / n);
  if (test_values.cols() != increments.size()) throw ShapeError("test values and increments disagree");
  return test_values * increments / n;
}

FrozenBatch freeze_batch(const MfgProblem& problem, const BucketStats& stats, const ParticleEnsemble& ensemble,
                         const std::vector<int>& first, const std::vector<int>& second, std::uint64_t salt) {
  if (first.size() != second.size()) throw ConfigError("the two mini-batches must have equal size");
  if (first.empty()) throw ConfigError("mini-batches must be nonempty");
  FrozenBatch batch;
  batch.problem = &problem;
  batch.stats = &stats;
  batch.batch_size = static_cast<int>(first.size());
  batch.particles = first;
  batch.particles.insert(batch.particles.end(), second.begin(), second.end());
  const int n = batch.columns();
  batch.time_index.resize(n);
  batch.z.resize(problem.d, n);
  batch.zeta = Eigen::MatrixXd::Zero(problem.q, n);
  batch.reset = Eigen::MatrixXd::Zero(problem.d, n);
  for (int j = 0; j < n; ++j) {
    const StateSample x = ensemble.particle(batch.particles[j]);
    batch.time_index[j] = x.time_index;
    batch.z.col(j) = x.z;
    TransitionNoise noise =
        draw_transition_noise(problem, x, ensemble.seed, batch.particles[j], ensemble.iteration, salt);
    if (x.time_index < problem.N)
      batch.zeta.col(j) = noise.zeta;
    else
      batch.reset.col(j) = noise.reset;
  }
  return batch;
}

namespace {

template <typename Scalar>
struct TransitionPass {
  MatrixX<Scalar> source_inputs;
  ControlForward<Scalar> control;
  std::vector<int> dest_index;
  Eigen::MatrixXd dest_z;
  MatrixX<Scalar> dest_inputs;
  VectorX<Scalar> running;    // h f at the source
  VectorX<Scalar> terminal;   // g at destinations on the horizon
  VectorX<Scalar> active;     // source before the horizon
  VectorX<Scalar> dest_live;  // active and destination before the horizon
};

template <typename Scalar>
TransitionPass<Scalar> transition_pass(const FrozenBatch& batch, const ControlNet<Scalar>& control, bool keep_tape) {
  const MfgProblem& p = *batch.problem;
  const BucketStats& stats = *batch.stats;
  const int n = batch.columns();
  const double h = p.h();
  const double sqrt_h = std::sqrt(h);
  TransitionPass<Scalar> pass;
  pass.source_inputs = encode_inputs<Scalar>(batch.time_index, batch.z, h);
  pass.control = control_forward(control, pass.source_inputs, keep_tape);
  const Eigen::MatrixXd u = pass.control.u.template cast<double>();
  pass.dest_index.resize(n);
  pass.dest_z.resize(p.d, n);
  pass.running = VectorX<Scalar>::Zero(n);
  pass.terminal = VectorX<Scalar>::Zero(n);
  pass.active = VectorX<Scalar>::Zero(n);
  pass.dest_live = VectorX<Scalar>::Zero(n);
  Eigen::VectorXd drift(p.d);
  Eigen::MatrixXd sigma(p.d, p.q);
  for (int j = 0; j < n; ++j) {
    const int k = batch.time_index[j];
    if (k == p.N) {
      pass.dest_index[j] = 0;
      pass.dest_z.col(j) = batch.reset.col(j);
      continue;
    }
    const PointEval at{k, p.time(k), batch.z.col(j), stats};
    p.drift(at, u.col(j), drift);
    p.diffusion(at, u.col(j), sigma);
    pass.dest_index[j] = k + 1;
    pass.dest_z.col(j) = batch.z.col(j) + h * drift + sqrt_h * (sigma * batch.zeta.col(j));
    pass.running(j) = static_cast<Scalar>(h * p.running_cost(at, u.col(j)));
    pass.active(j) = Scalar(1);
    if (k + 1 == p.N) {
      pass.terminal(j) = static_cast<Scalar>(p.terminal_cost(PointEval{p.N, p.T, pass.dest_z.col(j), stats}));
    } else {
      pass.dest_live(j) = Scalar(1);
    }
  }
  pass.dest_inputs = encode_inputs<Scalar>(pass.dest_index, pass.dest_z, h);
  return pass;
}

template <typename Scalar>
VectorX<Scalar> phi_values(const ValueNet<Scalar>& value, const MatrixX<Scalar>& inputs,
                           MlpTape<Scalar>* tape = nullptr) {
  return mlp_forward_batch(value.inner, inputs, tape).row(0).transpose();
}

template <typename Scalar>
VectorX<Scalar> increments_from(const TransitionPass<Scalar>& pass, const VectorX<Scalar>& phi_source,
                                const VectorX<Scalar>& phi_dest) {
  const auto live = pass.dest_live.array();
  const auto v_next = live * phi_dest.array() + (Scalar(1) - live) * pass.terminal.array();
  return (pass.active.array() * (pass.running.array() + v_next - phi_source.array())).matrix();
}

template <typename Scalar>
void split_losses(const FrozenBatch& batch, const MatrixX<Scalar>& rho, Objectives<Scalar>& out) {
  const int B = batch.batch_size;
  out.first_loss = weighted_loss<Scalar>(out.increments.head(B), rho.leftCols(B));
  out.second_loss = weighted_loss<Scalar>(out.increments.tail(B), rho.rightCols(B));
  out.pe = out.first_loss.dot(out.second_loss);
  out.pi = out.increments.mean();
}

/// Upstream of pe with respect to each increment: rho_j . L_other / B.
template <typename Scalar>
VectorX<Scalar> increment_weights(const FrozenBatch& batch, const MatrixX<Scalar>& rho, const Objectives<Scalar>& obj) {
  const int B = batch.batch_size;
  VectorX<Scalar> w(2 * B);
  w.head(B) = rho.leftCols(B).transpose() * obj.second_loss;
  w.tail(B) = rho.rightCols(B).transpose() * obj.first_loss;
  return w / static_cast<Scalar>(B);
}

template <typename Scalar>
Objectives<Scalar> pe_step_gradient(const FrozenBatch& batch, const TransitionPass<Scalar>& pass,
                                    const MatrixX<Scalar>& rho, const ValueNet<Scalar>& value,
                                    GradientBuffer<Scalar>& grads) {
  const int n = batch.columns();
  MatrixX<Scalar> joint(pass.source_inputs.rows(), 2 * n);
  joint << pass.source_inputs, pass.dest_inputs;
  MlpTape<Scalar> tape;
  const VectorX<Scalar> phi = phi_values(value, joint, &tape);
  Objectives<Scalar> obj;
  obj.increments = increments_from<Scalar>(pass, phi.head(n), phi.tail(n));
  split_losses(batch, rho, obj);
  const VectorX<Scalar> w = increment_weights(batch, rho, obj);
  MatrixX<Scalar> upstream(1, 2 * n);
  upstream.leftCols(n) = -(pass.active.array() * w.array()).matrix().transpose();
  upstream.rightCols(n) = (pass.dest_live.array() * w.array()).matrix().transpose();
  mlp_backward_batch(value.inner, tape, upstream, &grads, false);
  return obj;
}

template <typename Scalar>
Scalar pi_step_gradient(const FrozenBatch& batch, const TransitionPass<Scalar>& pass, const ValueNet<Scalar>& value,
                        const ControlNet<Scalar>& control, GradientBuffer<Scalar>& grads) {
  const MfgProblem& p = *batch.problem;
  const BucketStats& stats = *batch.stats;
  const int n = batch.columns();
  const double h = p.h();
  const double sqrt_h = std::sqrt(h);

  MlpTape<Scalar> tape;
  const VectorX<Scalar> phi_source = phi_values(value, pass.source_inputs);
  const VectorX<Scalar> phi_dest = phi_values(value, pass.dest_inputs, &tape);
  const VectorX<Scalar> inc = increments_from<Scalar>(pass, phi_source, phi_dest);
  const MatrixX<Scalar> input_grad =
      mlp_backward_batch<Scalar>(value.inner, tape, MatrixX<Scalar>::Ones(1, n), nullptr, true);

  const Eigen::MatrixXd u = pass.control.u.template cast<double>();
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(p.m, n);
  Eigen::VectorXd grad_z(p.d), grad_u(p.m), tmp(p.m);
  for (int j = 0; j < n; ++j) {
    if (pass.active(j) == Scalar(0)) continue;
    const int k = batch.time_index[j];
    const PointEval at{k, p.time(k), batch.z.col(j), stats};
    if (pass.dest_live(j) != Scalar(0)) {
      grad_z = input_grad.col(j).tail(p.d).template cast<double>();
    } else {
      p.terminal_cost_grad_z(PointEval{p.N, p.T, pass.dest_z.col(j), stats}, grad_z);
    }
    p.running_cost_grad_u(at, u.col(j), grad_u);
    p.drift_vjp_u(at, u.col(j), grad_z, tmp);
    grad_u = h * (grad_u + tmp);
    if (p.diffusion_vjp_u) {
      p.diffusion_vjp_u(at, u.col(j), batch.zeta.col(j), grad_z, tmp);
      grad_u += sqrt_h * tmp;
    }
    upstream.col(j) = grad_u / static_cast<double>(n);
  }
  control_backward(control, pass.control, MatrixX<Scalar>(upstream.template cast<Scalar>()), grads);
  return inc.mean();
}

template <typename Scalar>
Objectives<Scalar> adversarial_step_gradient(const FrozenBatch& batch, const TransitionPass<Scalar>& pass,
                                             const TestForward<Scalar>& rho, const ValueNet<Scalar>& value,
                                             const TestNet<Scalar>& test, GradientBuffer<Scalar>& grads) {
  const int n = batch.columns();
  const int B = batch.batch_size;
  Objectives<Scalar> obj;
  obj.increments = increments_from<Scalar>(pass, phi_values(value, pass.source_inputs),
                                           phi_values(value, pass.dest_inputs));
  split_losses(batch, rho.values, obj);
  MatrixX<Scalar> upstream(rho.values.rows(), n);
  upstream.leftCols(B) = obj.second_loss * obj.increments.head(B).transpose();
  upstream.rightCols(B) = obj.first_loss * obj.increments.tail(B).transpose();
  upstream /= static_cast<Scalar>(B);
  test_backward(test, rho, pass.source_inputs, upstream, grads);
  return obj;
}

template <typename Scalar>
std::vector<Transition> transitions_from(const FrozenBatch& batch, const TransitionPass<Scalar>& pass) {
  std::vector<Transition> out(batch.columns());
  for (int j = 0; j < batch.columns(); ++j) {
    Transition& tr = out[j];
    tr.particle = batch.particles[j];
    tr.source = StateSample{batch.time_index[j], batch.z.col(j)};
    if (batch.time_index[j] < batch.problem->N)
      tr.noise.zeta = batch.zeta.col(j);
    else
      tr.noise.reset = batch.reset.col(j);
    tr.destination = StateSample{pass.dest_index[j], pass.dest_z.col(j)};
  }
  return out;
}

}  // namespace

template <typename Scalar>
std::vector<Transition> batch_transitions(const FrozenBatch& batch, const ControlNet<Scalar>& control) {
  return transitions_from(batch, transition_pass(batch, control, false));
}

template <typename Scalar>
Objectives<Scalar> evaluate_objectives(const FrozenBatch& batch, const Networks<Scalar>& nets) {
  const auto pass = transition_pass(batch, nets.control, false);
  const auto rho = test_forward(nets.test, pass.source_inputs);
  Objectives<Scalar> obj;
  obj.increments = increments_from<Scalar>(pass, phi_values(nets.value, pass.source_inputs),
                                           phi_values(nets.value, pass.dest_inputs));
  split_losses(batch, rho.values, obj);
  return obj;
}

template <typename Scalar>
GradientBuffer<Scalar> pe_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets) {
  GradientBuffer<Scalar> grads(nets.value.inner);
  const auto pass = transition_pass(batch, nets.control, false);
  const auto rho = test_forward(nets.test, pass.source_inputs);
  pe_step_gradient(batch, pass, rho.values, nets.value, grads);
  return grads;
}

template <typename Scalar>
GradientBuffer<Scalar> pi_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets) {
  GradientBuffer<Scalar> grads(nets.control.inner);
  const auto pass = transition_pass(batch, nets.control, true);
  pi_step_gradient(batch, pass, nets.value, nets.control, grads);
  return grads;
}

template <typename Scalar>
GradientBuffer<Scalar> adversarial_gradient(const FrozenBatch& batch, const Networks<Scalar>& nets) {
  GradientBuffer<Scalar> grads(nets.test.eta);
  const auto pass = transition_pass(batch, nets.control, false);
  const auto rho = test_forward(nets.test, pass.source_inputs);
  adversarial_step_gradient(batch, pass, rho, nets.value, nets.test, grads);
  return grads;
}

// ---------------------------------------------------------------------------

TrainerState initial_trainer_state(const MfgProblem& problem, const TrainerConfig& config) {
  config.validate();
  TrainerState state;
  state.nets = make_networks<float>(problem, config);
  state.value_opt = make_rmsprop_state<float>(state.nets.value.inner, config.rmsprop);
  state.control_opt = make_rmsprop_state<float>(state.nets.control.inner, config.rmsprop);
  state.test_opt = make_rmsprop_state<float>(state.nets.test.eta, config.rmsprop);
  state.ensemble = init_ensemble(problem, config.ensemble_size, config.seed, config.initial_guess);
  return state;
}

PolicyIteration::PolicyIteration(MfgProblem problem, TrainerConfig config)
    : problem_(std::move(problem)), config_(std::move(config)) {
  state_ = initial_trainer_state(problem_, config_);
}

PolicyIteration::PolicyIteration(MfgProblem problem, TrainerConfig config, TrainerState state)
    : problem_(std::move(problem)), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  if (state_.ensemble.size() != config_.ensemble_size || state_.ensemble.dim() != problem_.d)
    throw CompatibilityError("saved ensemble does not match the configuration");
  const Networks<float> fresh = make_networks<float>(problem_, config_);
  if (!fresh.value.inner.congruent(state_.nets.value.inner) ||
      !fresh.control.inner.congruent(state_.nets.control.inner) || !fresh.test.eta.congruent(state_.nets.test.eta))
    throw CompatibilityError("saved networks do not match the configured architecture");
  // Callbacks and fixed bounds come from the problem, not from the saved state.
  state_.nets.value.terminal_cost = fresh.value.terminal_cost;
  state_.nets.value.time_step = fresh.value.time_step;
  state_.nets.value.steps = fresh.value.steps;
  state_.nets.control.lower = fresh.control.lower;
  state_.nets.control.upper = fresh.control.upper;
  state_.nets.control.time_step = fresh.control.time_step;
  state_.nets.test.scales = fresh.test.scales;
  state_.nets.test.scale_c = fresh.test.scale_c;
  state_.nets.test.time_step = fresh.test.time_step;
}

BucketStats PolicyIteration::current_stats() const {
  return bucket_stats(state_.ensemble, problem_.N, config_.kernel_cap);
}

namespace {

void check_finite(double value, const char* what, std::int64_t iteration) {
  if (!std::isfinite(value))
    throw DivergenceError(std::string(what) + " became non-finite at iteration " + std::to_string(iteration));
}

}  // namespace

void PolicyIteration::step() {
  auto& nets = state_.nets;
  auto& ensemble = state_.ensemble;
  const std::int64_t i = ensemble.iteration;
  const BucketStats stats = current_stats();
  CounterRng batch_rng(config_.seed, StreamKind::kMinibatch, static_cast<std::uint64_t>(i));
  const auto [first, second] = select_minibatches(ensemble.size(), config_.batch_size, batch_rng);
  FrozenBatch batch = freeze_batch(problem_, stats, ensemble, first, second);
  const LearningRates lr = learning_rates(config_, problem_.d, i);

  MatrixX<float> source_inputs = encode_inputs<float>(batch.time_index, batch.z, problem_.h());
  TestForward<float> rho = test_forward(nets.test, source_inputs);
  StepLosses losses;

  for (int j = 0; j < config_.inner_steps; ++j) {
    if (config_.fresh_noise && j > 0) batch = freeze_batch(problem_, stats, ensemble, first, second, j);
    const auto pass = transition_pass(batch, nets.control, true);

    GradientBuffer<float> value_grads(nets.value.inner);
    const auto obj = pe_step_gradient(batch, pass, rho.values, nets.value, value_grads);
    check_finite(obj.pe, "policy evaluation loss", i);
    losses.pe_loss = std::abs(static_cast<double>(obj.pe));
    rmsprop_step(nets.value.inner, value_grads, state_.value_opt, lr.value);

    GradientBuffer<float> control_grads(nets.control.inner);
    const float pi = pi_step_gradient(batch, pass, nets.value, nets.control, control_grads);
    check_finite(pi, "policy improvement objective", i);
    losses.pi_objective = pi;
    rmsprop_step(nets.control.inner, control_grads, state_.control_opt, lr.control);
  }

  auto pass = transition_pass(batch, nets.control, false);
  for (int k = 0; k < config_.adversarial_steps; ++k) {
    if (k > 0) rho = test_forward(nets.test, pass.source_inputs);
    GradientBuffer<float> test_grads(nets.test.eta);
    const auto obj = adversarial_step_gradient(batch, pass, rho, nets.value, nets.test, test_grads);
    check_finite(obj.pe, "adversarial loss", i);
    losses.pe_loss = std::abs(static_cast<double>(obj.pe));
    rmsprop_step(nets.test.eta, test_grads, state_.test_opt, lr.test, true);
  }

  if (!pass.dest_z.allFinite())
    throw DivergenceError("particle state became non-finite at iteration " + std::to_string(i));
  const auto transitions = transitions_from(batch, pass);
  apply_transitions(ensemble, transitions);
  losses_ = losses;
}

void PolicyIteration::run(const Observer& observer) {
  if (observer) observer(*this);
  while (iteration() < config_.iterations) {
    step();
    if (observer) observer(*this);
  }
}

#define MFGPI_INSTANTIATE_TRAINER(Scalar)                                                                          \
  template Networks<Scalar> make_networks<Scalar>(const MfgProblem&, const TrainerConfig&);                        \
  template MartingaleTerm martingale_increment<Scalar>(const MfgProblem&, const BucketStats&, const StateSample&,  \
                                                       const StateSample&, const ControlNet<Scalar>&,               \
                                                       const ValueNet<Scalar>&);                                    \
  template VectorX<Scalar> weighted_loss<Scalar>(const VectorX<Scalar>&, const MatrixX<Scalar>&);                  \
  template std::vector<Transition> batch_transitions<Scalar>(const FrozenBatch&, const ControlNet<Scalar>&);       \
  template Objectives<Scalar> evaluate_objectives<Scalar>(const FrozenBatch&, const Networks<Scalar>&);            \
  template GradientBuffer<Scalar> pe_gradient<Scalar>(const FrozenBatch&, const Networks<Scalar>&);                \
  template GradientBuffer<Scalar> pi_gradient<Scalar>(const FrozenBatch&, const Networks<Scalar>&);                \
  template GradientBuffer<Scalar> adversarial_gradient<Scalar>(const FrozenBatch&, const Networks<Scalar>&);

MFGPI_INSTANTIATE_TRAINER(float)
MFGPI_INSTANTIATE_TRAINER(double)

#undef MFGPI_INSTANTIATE_TRAINER

}  // namespace mfgpi
