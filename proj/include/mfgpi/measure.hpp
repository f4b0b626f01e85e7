#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mfgpi/problem.hpp"
#include "mfgpi/rng.hpp"

namespace mfgpi {

/// The M particles {X_i^m} whose empirical law is the current estimate of
/// the occupation measure. Time is stored as an index in {0, ..., N}.
struct ParticleEnsemble {
  std::vector<int> time_index;
  Eigen::MatrixXd z;  // d x M
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;

  int size() const { return static_cast<int>(time_index.size()); }
  int dim() const { return static_cast<int>(z.rows()); }
  StateSample particle(int m) const;
};

enum class InitialGuess {
  kVariantDefault,  // LQ: shifted diffusion Z0 + 5t 1 + c_sigma B_t; others: the initial law
  kInitialLaw,      // Z0 at every time
};

const char* to_string(InitialGuess guess);
InitialGuess initial_guess_from_string(const std::string& name);

/// Time index uniform on {0, ..., N-1}, position drawn from the initial
/// guess at that time. Particle m uses its own stream (seed, m).
ParticleEnsemble init_ensemble(const MfgProblem& problem, int M, std::uint64_t seed,
                               InitialGuess guess = InitialGuess::kVariantDefault);

BucketStats bucket_stats(const ParticleEnsemble& ensemble, int steps, int kernel_cap);

/// Randomness consumed by one application of the random mapping: a Gaussian
/// draw for an Euler-Maruyama step, or a fresh initial state for a reset.
struct TransitionNoise {
  Eigen::VectorXd zeta;   // q entries when the source is before the horizon
  Eigen::VectorXd reset;  // d entries when the source sits at the horizon
};

/// Draws the noise of particle m at outer iteration i. `salt` separates
/// redraws within one iteration.
TransitionNoise draw_transition_noise(const MfgProblem& problem, const StateSample& source, std::uint64_t seed,
                                      int particle, std::int64_t iteration, std::uint64_t salt = 0);

/// One step of the random mapping with the control value u = u(x) already
/// evaluated: (n+1, z + b h + sigma sqrt(h) zeta) before the horizon, and
/// (0, reset) at the horizon.
StateSample random_map(const MfgProblem& problem, const StateSample& x, const BucketStats& stats,
                       const Eigen::VectorXd& u, const TransitionNoise& noise);

struct Transition {
  int particle = 0;
  StateSample source;
  TransitionNoise noise;
  StateSample destination;
};

/// Disjoint, sorted index sets of equal size drawn uniformly without
/// replacement from {0, ..., M-1}.
std::pair<std::vector<int>, std::vector<int>> select_minibatches(int M, int batch_size, CounterRng& rng);

/// Replaces the selected particles by their destinations and advances the
/// iteration counter.
void apply_transitions(ParticleEnsemble& ensemble, std::span<const Transition> transitions);

/// Rows: iteration, time_index, z_1, ..., z_d.
void write_snapshot(std::ostream& out, const ParticleEnsemble& ensemble);

}  // namespace mfgpi
