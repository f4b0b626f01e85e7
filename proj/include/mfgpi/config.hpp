#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "mfgpi/problem.hpp"
#include "mfgpi/trainer.hpp"

namespace mfgpi {

/// Which bucket statistics drive the coefficients of the J_hat simulation.
enum class CostMean { kEmpirical, kReference };

const char* to_string(CostMean mode);
CostMean cost_mean_from_string(const std::string& name);

/// Everything needed to reproduce a run.
///
/// Text form, one `key = value` per line under `[section]` headers:
///
///   [problem]    variant, d, steps
///   [constants]  any named problem constant, e.g. c5 = 0.5
///   [trainer]    TrainerConfig fields by name, plus rmsprop_smoothing
///                and rmsprop_epsilon
///   [output]     directory, metrics_every, checkpoint_every, snapshot_every
///   [metrics]    seed, cost_mean (empirical | reference)
///
/// `#` and `;` start comments. `variant` and `d` are required.
struct RunConfig {
  Variant variant = Variant::kLq1;
  int d = 1;
  int steps = 100;
  std::map<std::string, double> constants;
  TrainerConfig trainer;
  std::string output_dir = "out";
  int metrics_every = 100;
  int checkpoint_every = 500;
  int snapshot_every = 0;  // 0 disables snapshots
  std::uint64_t metrics_seed = 7;
  CostMean cost_mean = CostMean::kEmpirical;

  void validate() const;
  MfgProblem make_problem() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);
void write_run_config(std::ostream& out, const RunConfig& config);

}  // namespace mfgpi
