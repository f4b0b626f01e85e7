#pragma once

#include <iosfwd>
#include <string>

#include "mfgpi/problem.hpp"
#include "mfgpi/trainer.hpp"

namespace mfgpi {

/// Text checkpoint of a TrainerState.
///
///   mfgpi-checkpoint 1
///   iteration <i>
///   seed <ensemble seed>
///   array <key> <rows> <cols>
///   <rows*cols values, column-major, hexfloat>
///   ...
///
/// Keys are `<net>.W<k>` / `<net>.b<k>` for net in {control, value, test},
/// the same keys prefixed by `opt.` for the RMSProp mean squares, and
/// `ensemble.n` (1 x M) and `ensemble.z` (d x M). Hexfloat values make the
/// round trip exact.
void write_checkpoint(std::ostream& out, const TrainerState& state);
void save_checkpoint(const std::string& path, const TrainerState& state);

/// Reads a checkpoint into a state shaped for (problem, config). Throws
/// CompatibilityError when any array disagrees with that shape.
TrainerState read_checkpoint(std::istream& in, const MfgProblem& problem, const TrainerConfig& config);
TrainerState load_checkpoint(const std::string& path, const MfgProblem& problem, const TrainerConfig& config);

}  // namespace mfgpi
