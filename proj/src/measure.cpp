#include "mfgpi/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mfgpi/errors.hpp"

namespace mfgpi {

StateSample ParticleEnsemble::particle(int m) const {
  if (m < 0 || m >= size()) throw IndexError("particle index out of range");
  return StateSample{time_index[m], z.col(m)};
}

const char* to_string(InitialGuess guess) {
  return guess == InitialGuess::kInitialLaw ? "initial_law" : "default";
}

InitialGuess initial_guess_from_string(const std::string& name) {
  if (name == "default") return InitialGuess::kVariantDefault;
  if (name == "initial_law") return InitialGuess::kInitialLaw;
  throw ConfigError("unknown initial guess '" + name + "'");
}

ParticleEnsemble init_ensemble(const MfgProblem& problem, int M, std::uint64_t seed, InitialGuess guess) {
  if (M <= 0) throw ConfigError("ensemble size must be positive");
  ParticleEnsemble ensemble;
  ensemble.seed = seed;
  ensemble.time_index.resize(M);
  ensemble.z.resize(problem.d, M);
  for (int m = 0; m < M; ++m) {
    CounterRng rng(seed, StreamKind::kInitialEnsemble, static_cast<std::uint64_t>(m));
    const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(problem.N)));
    ensemble.time_index[m] = n;
    ensemble.z.col(m) = guess == InitialGuess::kInitialLaw ? problem.sample_initial(rng)
                                                           : problem.sample_initial_guess(problem.time(n), rng);
  }
  return ensemble;
}

BucketStats bucket_stats(const ParticleEnsemble& ensemble, int steps, int kernel_cap) {
  CounterRng rng(ensemble.seed, StreamKind::kKernelSubsample, static_cast<std::uint64_t>(ensemble.iteration));
  return BucketStats::from_particles(steps, ensemble.time_index, ensemble.z, kernel_cap, rng);
}

TransitionNoise draw_transition_noise(const MfgProblem& problem, const StateSample& source, std::uint64_t seed,
                                      int particle, std::int64_t iteration, std::uint64_t salt) {
  TransitionNoise noise;
  const auto i = static_cast<std::uint64_t>(iteration);
  const auto m = static_cast<std::uint64_t>(particle) | (salt << 40);
  if (source.time_index < problem.N) {
    CounterRng rng(seed, StreamKind::kTransitionNoise, m, i);
    noise.zeta.resize(problem.q);
    for (int k = 0; k < problem.q; ++k) noise.zeta(k) = rng.normal();
  } else {
    CounterRng rng(seed, StreamKind::kResetDraw, m, i);
    noise.reset = problem.sample_initial(rng);
  }
  return noise;
}

StateSample random_map(const MfgProblem& problem, const StateSample& x, const BucketStats& stats,
                       const Eigen::VectorXd& u, const TransitionNoise& noise) {
  if (x.time_index < 0 || x.time_index > problem.N) throw IndexError("time index outside the grid");
  if (x.time_index == problem.N) {
    if (noise.reset.size() != problem.d) throw ShapeError("reset draw missing or of wrong dimension");
    return StateSample{0, noise.reset};
  }
  if (noise.zeta.size() != problem.q) throw ShapeError("transition noise missing or of wrong dimension");
  if (u.size() != problem.m) throw ShapeError("control dimension mismatch");
  const double h = problem.h();
  const PointEval at{x.time_index, problem.time(x.time_index), x.z, stats};
  Eigen::VectorXd drift(problem.d);
  Eigen::MatrixXd sigma(problem.d, problem.q);
  problem.drift(at, u, drift);
  problem.diffusion(at, u, sigma);
  return StateSample{x.time_index + 1, x.z + h * drift + std::sqrt(h) * (sigma * noise.zeta)};
}

std::pair<std::vector<int>, std::vector<int>> select_minibatches(int M, int batch_size, CounterRng& rng) {
  if (batch_size < 0) throw ConfigError("batch size must be nonnegative");
  if (2LL * batch_size > M) throw ConfigError("two batches of the requested size do not fit in the ensemble");
  std::vector<int> pool(M);
  std::iota(pool.begin(), pool.end(), 0);
  const int take = 2 * batch_size;
  for (int k = 0; k < take; ++k) {
    const auto pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(M - k)));
    std::swap(pool[k], pool[pick]);
  }
  std::vector<int> first(pool.begin(), pool.begin() + batch_size);
  std::vector<int> second(pool.begin() + batch_size, pool.begin() + take);
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

void apply_transitions(ParticleEnsemble& ensemble, std::span<const Transition> transitions) {
  std::vector<char> seen(ensemble.size(), 0);
  for (const auto& tr : transitions) {
    if (tr.particle < 0 || tr.particle >= ensemble.size()) throw IndexError("transition particle out of range");
    if (seen[tr.particle]) throw ConsistencyError("particle " + std::to_string(tr.particle) + " moved twice");
    seen[tr.particle] = 1;
    if (tr.destination.z.size() != ensemble.dim()) throw ShapeError("destination dimension mismatch");
  }
  for (const auto& tr : transitions) {
    ensemble.time_index[tr.particle] = tr.destination.time_index;
    ensemble.z.col(tr.particle) = tr.destination.z;
  }
  ++ensemble.iteration;
}

void write_snapshot(std::ostream& out, const ParticleEnsemble& ensemble) {
  out << "iteration,time_index";
  for (int k = 0; k < ensemble.dim(); ++k) out << ",z" << (k + 1);
  out << '\n';
  const auto old_precision = out.precision(17);
  for (int m = 0; m < ensemble.size(); ++m) {
    out << ensemble.iteration << ',' << ensemble.time_index[m];
    for (int k = 0; k < ensemble.dim(); ++k) out << ',' << ensemble.z(k, m);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace mfgpi
