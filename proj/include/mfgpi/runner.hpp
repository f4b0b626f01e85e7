#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfgpi/config.hpp"
#include "mfgpi/metrics.hpp"
#include "mfgpi/reference.hpp"
#include "mfgpi/trainer.hpp"

namespace mfgpi {

inline constexpr const char* kMetricsHeader = "iteration,pe_loss,pi_objective,RE1,REinf,RC,J_hat,wall_s";

void write_metrics_row(std::ostream& out, const MetricsRecord& record);

/// Frozen evaluation context of a run: test points, the optional
/// reference solution and the path seed.
class MetricsContext {
 public:
  MetricsContext(const MfgProblem& problem, const RunConfig& config);

  const TestPointSet& points() const { return points_; }
  const ReferenceEvaluator* reference() const { return reference_.get(); }
  /// J* over D_rc; NaN without a reference.
  double j_star() const;

  /// Metrics of `nets` against the ensemble's statistics (or the reference
  /// mean path when configured).
  MetricsRecord evaluate(const Networks<float>& nets, const BucketStats& ensemble_stats,
                         std::int64_t iteration) const;

 private:
  const MfgProblem* problem_;
  CostMean cost_mean_;
  std::uint64_t seed_;
  TestPointSet points_;
  std::shared_ptr<const ReferenceEvaluator> reference_;
  std::optional<BucketStats> reference_stats_;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides trainer.seed
  std::string resume_from;            // checkpoint path, empty for a fresh run
  std::function<void(const MetricsRecord&)> on_record;
};

struct RunResult {
  std::string status;  // "completed" or "diverged"
  std::string message;
  std::vector<MetricsRecord> history;
  std::string last_checkpoint;
  double j_star = 0.0;  // NaN without a reference
};

/// Runs Algorithm 1 under `config` and writes into config.output_dir:
/// config.cfg, metrics.csv, checkpoints/ckpt_<i>.txt, final.ckpt,
/// snapshots/snapshot_<i>.csv and summary.json. Divergence is reported in
/// the result rather than thrown.
RunResult run_experiment(const RunConfig& config, const RunOptions& options = {});

/// Recomputes the metric record of a saved state without training.
MetricsRecord evaluate_checkpoint(const RunConfig& config, const std::string& checkpoint_path,
                                  std::optional<std::uint64_t> metrics_seed = std::nullopt);

struct ReferenceReport {
  std::string table_path;
  double j_star = 0.0;
};

/// Writes reference.csv (dense ODE table) and reference.json (J* over a
/// freshly seeded D_rc) into `output_dir`. ConfigError for variants without
/// a closed-form reference.
ReferenceReport export_reference(Variant variant, int d, const std::string& output_dir, std::uint64_t seed = 7);

}  // namespace mfgpi
