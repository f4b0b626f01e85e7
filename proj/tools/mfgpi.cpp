// Command line front end: run, reference, evaluate.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfgpi/config.hpp"
#include "mfgpi/errors.hpp"
#include "mfgpi/runner.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void print_record(const mfgpi::MetricsRecord& r) {
  std::fprintf(stderr, "iter %6lld  pe %.3e  pi %+.4e  RE1 %.4e  REinf %.4e  RC %+.4e  J %.5f  %.1fs\n",
               static_cast<long long>(r.iteration), r.pe_loss, r.pi_objective, r.re1, r.reinf, r.rc, r.j_hat,
               r.wall_s);
}

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& resume,
                const std::string& output_dir, bool quiet) {
  mfgpi::RunConfig config = mfgpi::load_run_config(config_path);
  if (!output_dir.empty()) config.output_dir = output_dir;
  mfgpi::RunOptions options;
  options.seed = seed;
  options.resume_from = resume;
  if (!quiet) options.on_record = print_record;
  const auto result = mfgpi::run_experiment(config, options);
  if (result.status != "completed") {
    std::cerr << "error: " << result.message << "\n";
    std::cerr << "last checkpoint: " << (result.last_checkpoint.empty() ? "(none)" : result.last_checkpoint) << "\n";
    return kExitFailure;
  }
  std::cout << "summary: " << config.output_dir << "/summary.json\n";
  return 0;
}

int reference_command(const std::string& variant, int d, const std::string& output_dir, std::uint64_t seed) {
  const auto kind = mfgpi::variant_from_string(variant);
  if (!mfgpi::has_reference_solution(kind)) {
    std::cerr << "usage error: no closed-form reference for variant '" << variant
              << "' (reference supports lq1, lq2, lq3, systemic_risk)\n";
    return kExitUsage;
  }
  const auto report = mfgpi::export_reference(kind, d, output_dir, seed);
  std::printf("table: %s\nJ_star: %.17g\n", report.table_path.c_str(), report.j_star);
  return 0;
}

int evaluate_command(const std::string& checkpoint, const std::string& config_path,
                     std::optional<std::uint64_t> metrics_seed) {
  const mfgpi::RunConfig config = mfgpi::load_run_config(config_path);
  std::string path = checkpoint;
  if (std::filesystem::is_directory(path)) path = (std::filesystem::path(path) / "final.ckpt").string();
  const auto record = mfgpi::evaluate_checkpoint(config, path, metrics_seed);
  std::cout << mfgpi::kMetricsHeader << "\n";
  mfgpi::write_metrics_row(std::cout, record);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerative deep policy iteration for finite-horizon mean-field games"};
  app.require_subcommand(1);

  std::string config_path, resume, output_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Train under a config file");
  run->add_option("config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  run->add_option("--output", output_dir, "Override the output directory");
  run->add_flag("--quiet", quiet, "Do not print metric records");

  std::string variant, ref_dir;
  int d = 1;
  std::uint64_t ref_seed = 7;
  auto* reference = app.add_subcommand("reference", "Export the ODE reference solution");
  reference->add_option("variant", variant, "lq1 | lq2 | lq3 | systemic_risk")->required();
  reference->add_option("d", d, "State dimension")->required()->check(CLI::PositiveNumber);
  reference->add_option("output", ref_dir, "Output directory")->required();
  reference->add_option("--seed", ref_seed, "Seed of the D_rc test points");

  std::string checkpoint, eval_config;
  std::optional<std::uint64_t> metrics_seed;
  auto* evaluate = app.add_subcommand("evaluate", "Recompute metrics of a checkpoint");
  evaluate->add_option("checkpoint", checkpoint, "Run directory or checkpoint file")->required()->check(
      CLI::ExistingPath);
  evaluate->add_option("config", eval_config, "Run config file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--metrics-seed", metrics_seed, "Override the metrics seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, seed, resume, output_dir, quiet);
    if (*reference) return reference_command(variant, d, ref_dir, ref_seed);
    if (*evaluate) return evaluate_command(checkpoint, eval_config, metrics_seed);
  } catch (const mfgpi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mfgpi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
