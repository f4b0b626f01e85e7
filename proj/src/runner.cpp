#include "mfgpi/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mfgpi/checkpoint.hpp"
#include "mfgpi/errors.hpp"

namespace mfgpi {

namespace fs = std::filesystem;

namespace {

std::string format_value(double value) {
  if (std::isnan(value)) return "nan";
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

nlohmann::json record_json(const MetricsRecord& r) {
  auto number = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"iteration", r.iteration}, {"pe_loss", number(r.pe_loss)}, {"pi_objective", number(r.pi_objective)},
          {"RE1", number(r.re1)},     {"REinf", number(r.reinf)},     {"RC", number(r.rc)},
          {"J_hat", number(r.j_hat)}, {"wall_s", r.wall_s}};
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

/// Keeps the header and the rows stamped up to `iteration` of an existing
/// history so a resumed run continues it without duplicates. Sets
/// `has_current` when a row for `iteration` itself was kept.
std::string truncated_history(const fs::path& path, std::int64_t iteration, bool& has_current) {
  std::ostringstream kept;
  kept << kMetricsHeader << '\n';
  has_current = false;
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return kept.str();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto stamp = std::stoll(line.substr(0, line.find(',')));
    if (stamp <= iteration) kept << line << '\n';
    if (stamp == iteration) has_current = true;
  }
  return kept.str();
}

}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
  out << r.iteration << ',' << format_value(r.pe_loss) << ',' << format_value(r.pi_objective) << ','
      << format_value(r.re1) << ',' << format_value(r.reinf) << ',' << format_value(r.rc) << ','
      << format_value(r.j_hat) << ',' << format_value(r.wall_s) << '\n';
}

MetricsContext::MetricsContext(const MfgProblem& problem, const RunConfig& config)
    : problem_(&problem),
      cost_mean_(config.cost_mean),
      seed_(config.metrics_seed),
      points_(make_test_points(problem, config.metrics_seed)) {
  if (has_reference_solution(problem.variant)) {
    reference_ = std::make_shared<const ReferenceEvaluator>(solve_reference(problem));
    if (cost_mean_ == CostMean::kReference)
      reference_stats_ = BucketStats::from_means(reference_->mean_table(problem.N, problem.T));
  }
}

double MetricsContext::j_star() const {
  return reference_ ? reference_cost(*reference_, points_.rc) : std::numeric_limits<double>::quiet_NaN();
}

MetricsRecord MetricsContext::evaluate(const Networks<float>& nets, const BucketStats& ensemble_stats,
                                       std::int64_t iteration) const {
  MetricsRecord record;
  record.iteration = iteration;
  const BucketStats& stats = reference_stats_ ? *reference_stats_ : ensemble_stats;
  evaluate_metrics(*problem_, nets, stats, points_, reference_.get(), seed_, record);
  return record;
}

RunResult run_experiment(const RunConfig& base_config, const RunOptions& options) {
  RunConfig config = base_config;
  if (options.seed) config.trainer.seed = *options.seed;
  config.validate();

  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir / "checkpoints");
  if (config.snapshot_every > 0) fs::create_directories(out_dir / "snapshots");
  {
    auto cfg_out = open_output(out_dir / "config.cfg");
    write_run_config(cfg_out, config);
  }

  MfgProblem problem = config.make_problem();
  const MetricsContext context(problem, config);

  std::optional<PolicyIteration> trainer;
  if (options.resume_from.empty()) {
    trainer.emplace(problem, config.trainer);
  } else {
    trainer.emplace(problem, config.trainer, load_checkpoint(options.resume_from, problem, config.trainer));
  }

  const fs::path metrics_path = out_dir / "metrics.csv";
  const std::int64_t start_iteration = trainer->iteration();
  bool start_recorded = false;
  std::string prefix = std::string(kMetricsHeader) + "\n";
  if (!options.resume_from.empty()) prefix = truncated_history(metrics_path, start_iteration, start_recorded);
  auto metrics_out = open_output(metrics_path);
  metrics_out << prefix << std::flush;

  RunResult result;
  result.j_star = context.j_star();
  if (!options.resume_from.empty()) result.last_checkpoint = options.resume_from;

  const auto start = std::chrono::steady_clock::now();
  const std::int64_t final_iteration = config.trainer.iterations;
  auto observe = [&](const PolicyIteration& pi) {
    const std::int64_t i = pi.iteration();
    const bool already_recorded = start_recorded && i == start_iteration;
    if ((i % config.metrics_every == 0 || i == final_iteration) && !already_recorded) {
      MetricsRecord record = context.evaluate(pi.nets(), pi.current_stats(), i);
      record.pe_loss = pi.last_losses().pe_loss;
      record.pi_objective = pi.last_losses().pi_objective;
      record.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_metrics_row(metrics_out, record);
      metrics_out.flush();
      result.history.push_back(record);
      if (options.on_record) options.on_record(record);
    }
    if (config.checkpoint_every > 0 && i > 0 && i % config.checkpoint_every == 0 && i != final_iteration) {
      const auto path = out_dir / "checkpoints" / ("ckpt_" + std::to_string(i) + ".txt");
      save_checkpoint(path.string(), pi.state());
      result.last_checkpoint = path.string();
    }
    if (config.snapshot_every > 0 && (i % config.snapshot_every == 0 || i == final_iteration)) {
      auto snap = open_output(out_dir / "snapshots" / ("snapshot_" + std::to_string(i) + ".csv"));
      write_snapshot(snap, pi.ensemble());
    }
  };

  try {
    trainer->run(observe);
    const auto path = out_dir / "final.ckpt";
    save_checkpoint(path.string(), trainer->state());
    result.last_checkpoint = path.string();
    result.status = "completed";
  } catch (const DivergenceError& e) {
    result.status = "diverged";
    result.message = e.what();
  }

  nlohmann::json summary = {{"variant", to_string(config.variant)},
                            {"d", config.d},
                            {"seed", config.trainer.seed},
                            {"iterations", config.trainer.iterations},
                            {"status", result.status},
                            {"iteration_reached", trainer->iteration()},
                            {"last_checkpoint", result.last_checkpoint}};
  if (!result.message.empty()) summary["message"] = result.message;
  if (std::isfinite(result.j_star)) summary["J_star"] = result.j_star;
  if (!result.history.empty()) summary["final"] = record_json(result.history.back());
  auto summary_out = open_output(out_dir / "summary.json");
  summary_out << summary.dump(2) << '\n';
  return result;
}

MetricsRecord evaluate_checkpoint(const RunConfig& base_config, const std::string& checkpoint_path,
                                  std::optional<std::uint64_t> metrics_seed) {
  RunConfig config = base_config;
  if (metrics_seed) config.metrics_seed = *metrics_seed;
  config.validate();
  const MfgProblem problem = config.make_problem();
  PolicyIteration trainer(problem, config.trainer, load_checkpoint(checkpoint_path, problem, config.trainer));
  const MetricsContext context(trainer.problem(), config);
  return context.evaluate(trainer.nets(), trainer.current_stats(), trainer.iteration());
}

ReferenceReport export_reference(Variant variant, int d, const std::string& output_dir, std::uint64_t seed) {
  if (!has_reference_solution(variant))
    throw ConfigError("no closed-form reference for variant " + to_string(variant));
  const MfgProblem problem = make_problem(variant, d);
  const ReferenceEvaluator evaluator = solve_reference(problem);
  const fs::path out_dir(output_dir);
  fs::create_directories(out_dir);

  ReferenceReport report;
  report.table_path = (out_dir / "reference.csv").string();
  {
    auto table = open_output(report.table_path);
    evaluator.write_table(table);
  }
  report.j_star = reference_cost(evaluator, make_test_points(problem, seed).rc);
  const nlohmann::json info = {{"variant", to_string(variant)}, {"d", d}, {"seed", seed}, {"J_star", report.j_star}};
  auto out = open_output(out_dir / "reference.json");
  out << info.dump(2) << '\n';
  return report;
}

}  // namespace mfgpi
