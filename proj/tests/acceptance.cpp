// Acceptance checks. `mfgpi_acceptance <criterion>` runs one criterion and
// prints a single PASS/FAIL line for it; `all` runs every criterion.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "mfgpi/config.hpp"
#include "mfgpi/errors.hpp"
#include "mfgpi/measure.hpp"
#include "mfgpi/reference.hpp"
#include "mfgpi/runner.hpp"
#include "support.hpp"

using namespace mfgpi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

fs::path output_root() { return fs::current_path() / "acceptance_out"; }

RunConfig desk_config(const std::string& name, const std::string& out) {
  auto config = load_run_config(std::string(MFGPI_CONFIG_DIR) + "/" + name);
  config.output_dir = (output_root() / out).string();
  fs::remove_all(config.output_dir);
  return config;
}

void print_record(const MetricsRecord& r) {
  std::printf("  iter %6lld  pe %.3e  pi %+.4f  RE1 %.4e  REinf %.4e  RC %+.4e  J %.5f  %.0fs\n",
              static_cast<long long>(r.iteration), r.pe_loss, r.pi_objective, r.re1, r.reinf, r.rc, r.j_hat,
              r.wall_s);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// 1. Reverse-mode gradients against 64-bit central differences.

Outcome gradients() {
  const auto problem = make_problem(Variant::kLq1, 1);
  TrainerConfig config;
  config.ensemble_size = 2000;
  config.batch_size = 50;
  constexpr double kStep = 1e-6, kTol = 1e-3;
  constexpr int kCoordinates = 50, kBatches = 10;
  double worst = 0.0;
  int checked = 0, kinks = 0;
  bool enough = true;

  for (int b = 0; b < kBatches; ++b) {
    config.seed = 100 + static_cast<std::uint64_t>(b);
    auto state = initial_trainer_state(problem, config);
    // Spread the ensemble over all time indices, the horizon included.
    for (int m = 0; m < config.ensemble_size; ++m) state.ensemble.time_index[m] = m % (problem.N + 1);
    const auto stats = bucket_stats(state.ensemble, problem.N, config.kernel_cap);
    CounterRng rng(config.seed, StreamKind::kUser);
    const auto [a, c] = select_minibatches(config.ensemble_size, config.batch_size, rng);
    const auto batch = freeze_batch(problem, stats, state.ensemble, a, c);
    auto nets = state.nets.cast<double>();

    auto check = [&](const char* label, const ParamTensors<double>& grad, ParamTensors<double>& params, auto objective) {
      const double scale = grad.flatten().cwiseAbs().maxCoeff();
      int done = 0;
      for (int tries = 0; done < kCoordinates && tries < 20 * kCoordinates; ++tries) {
        const auto k = static_cast<std::size_t>(rng.below(params.size()));
        const double old = params.at(k);
        auto central = [&](double step) {
          params.at(k) = old + step;
          const double fp = objective();
          params.at(k) = old - step;
          const double fm = objective();
          params.at(k) = old;
          return (fp - fm) / (2 * step);
        };
        const double fd = central(kStep), half = central(kStep / 2);
        // Rounding noise of the difference quotient bounds what it can resolve.
        const double noise = 64 * std::numeric_limits<double>::epsilon() * std::abs(objective()) / kStep;
        const double floor = std::max(1e-6 * scale, noise / kTol);
        // Central differences at two steps disagree when a ReLU kink lies in the stencil.
        if (testing::relative_gap(fd, half, floor) > 1e-4) {
          ++kinks;
          continue;
        }
        const double err = testing::relative_gap(fd, grad.at(k), floor);
        worst = std::max(worst, err);
        ++done;
      }
      checked += done;
      enough = enough && done >= kCoordinates;
    };
    auto pe = [&] { return evaluate_objectives(batch, nets).pe; };
    check("theta", pe_gradient(batch, nets), nets.value.inner, pe);
    check("alpha", pi_gradient(batch, nets), nets.control.inner, [&] { return evaluate_objectives(batch, nets).pi; });
    check("eta", adversarial_gradient(batch, nets), nets.test.eta, pe);
  }
  return {enough && worst <= kTol,
          format("worst relative error %.2e over %d coordinates (%d kink stencils skipped), tol %.0e", worst,
                 checked, kinks, kTol)};
}

// ---------------------------------------------------------------------------
// 2. One-step Euler-Maruyama moments.

Outcome euler_moments() {
  Eigen::Vector2d b(0.7, -0.4);
  Eigen::Matrix2d sigma;
  sigma << 0.5, 0.0, 0.2, 0.3;
  const auto p = testing::constant_coefficient_problem(b, sigma, 100);
  const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(2, p.N + 1));
  const StateSample x{10, Eigen::Vector2d(0.3, -1.2)};
  const int draws = 100000;
  Eigen::MatrixXd y(2, draws);
  for (int k = 0; k < draws; ++k)
    y.col(k) = random_map(p, x, stats, Eigen::VectorXd::Zero(2), draw_transition_noise(p, x, 21, k, 0)).z;
  const double h = p.h();
  const Eigen::Vector2d mean = y.rowwise().mean();
  const Eigen::Matrix2d cov = (y.colwise() - mean) * (y.colwise() - mean).transpose() / (draws - 1);
  const Eigen::Matrix2d exact = sigma * sigma.transpose() * h;
  double worst = 0.0;  // in units of the Monte Carlo standard error
  for (int i = 0; i < 2; ++i) {
    worst = std::max(worst, std::abs(mean(i) - (x.z(i) + b(i) * h)) / std::sqrt(exact(i, i) / draws));
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((exact(i, i) * exact(j, j) + exact(i, j) * exact(i, j)) / draws);
      worst = std::max(worst, std::abs(cov(i, j) - exact(i, j)) / se);
    }
  }
  return {worst <= 3.0, format("largest deviation %.2f standard errors over %d draws, band 3", worst, draws)};
}

// ---------------------------------------------------------------------------
// 3. ODE reference oracles.

Outcome ode_oracles() {
  const OdeRhs decay = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -y; };
  const auto sol = rk_integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 1.0);
  const double exp_err = std::abs(sol(1.0)(0) - std::exp(-1.0)) / std::exp(-1.0);

  const auto lq1 = make_problem(Variant::kLq1, 1);
  const auto ref = solve_reference(lq1);
  CounterRng rng(3, StreamKind::kUser);
  double a_err = 0.0, v_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    a_err = std::max(a_err, std::abs(ref.lq_coefficients(rng.uniform()).a - 1.0));
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, rng.uniform(-1, 1));
    v_err = std::max(v_err, std::abs(ref.value(0.0, z) - (0.5 * z(0) * z(0) + 0.625)));
  }

  double residual = 0.0;
  for (auto variant : {Variant::kLq1, Variant::kLq2, Variant::kLq3}) {
    const auto problem = make_problem(variant, 1);
    std::vector<TimeSpacePoint> samples;
    for (int k = 0; k < 100; ++k)
      samples.push_back({rng.uniform(), Eigen::VectorXd::Constant(1, rng.uniform(-2, 2))});
    residual = std::max(residual, hjb_residual_check(problem, solve_reference(problem), samples));
  }
  const bool pass = exp_err <= 1e-8 && a_err <= 1e-6 && v_err <= 1e-6 && residual <= 1e-6;
  return {pass, format("exp rel err %.1e, |a-1| %.1e, |v(0,z)-closed form| %.1e, HJB residual %.1e (tols 1e-8, "
                       "1e-6, 1e-6, 1e-6)",
                       exp_err, a_err, v_err, residual)};
}

// ---------------------------------------------------------------------------
// 4. Uniform time marginal under a fixed control.

Outcome time_marginal() {
  const auto problem = make_problem(Variant::kLq1, 1);
  TrainerConfig config;
  config.ensemble_size = 50000;
  config.batch_size = 2500;
  auto state = initial_trainer_state(problem, config);
  const auto control = state.nets.control.cast<double>();
  const int M = config.ensemble_size, B = config.batch_size;
  const int iterations = 50 * (M / B);
  CounterRng rng(config.seed, StreamKind::kUser);
  for (int i = 0; i < iterations; ++i) {
    const auto stats = bucket_stats(state.ensemble, problem.N, config.kernel_cap);
    const auto [a, b] = select_minibatches(M, B, rng);
    const auto batch = freeze_batch(problem, stats, state.ensemble, a, b, static_cast<std::uint64_t>(i));
    apply_transitions(state.ensemble, batch_transitions(batch, control));
  }
  std::vector<int> counts(problem.N + 1, 0);
  for (int n : state.ensemble.time_index) ++counts[n];
  const double expected = double(M) / (problem.N + 1);
  double worst = 0.0;
  for (int c : counts) worst = std::max(worst, std::abs(c - expected));
  const double tol = 5.0 * std::sqrt(expected);
  return {worst <= tol, format("max bucket deviation %.1f after %d iterations, tol %.1f", worst, iterations, tol)};
}

// ---------------------------------------------------------------------------
// 5-7. Desk training runs.

RunResult desk_run(const RunConfig& config) {
  RunOptions options;
  options.on_record = print_record;
  return run_experiment(config, options);
}

Outcome lq1_desk() {
  const auto result = desk_run(desk_config("lq1_desk.cfg", "lq1"));
  if (result.status != "completed") return {false, "run diverged: " + result.message};
  const auto& last = result.history.back();
  const bool pass = std::abs(last.rc) <= 5e-2 && last.re1 <= 5e-2;
  return {pass, format("final RC %.3e, RE1 %.3e at iteration %lld, tol 5e-2", last.rc, last.re1,
                       static_cast<long long>(last.iteration))};
}

Outcome sr_desk() {
  const auto result = desk_run(desk_config("sr_desk.cfg", "sr"));
  if (result.status != "completed") return {false, "run diverged: " + result.message};
  const auto& last = result.history.back();
  return {last.re1 <= 5e-2, format("final RE1 %.3e (RC %.3e) at iteration %lld, tol 5e-2", last.re1, last.rc,
                                   static_cast<long long>(last.iteration))};
}

bool finite_history(const RunResult& r) {
  return std::all_of(r.history.begin() + 1, r.history.end(),
                     [](const MetricsRecord& m) { return std::isfinite(m.pe_loss) && std::isfinite(m.pi_objective); });
}

Outcome qualitative() {
  std::string detail;
  bool pass = true;

  const auto tt = desk_run(desk_config("tt_desk.cfg", "tt"));
  const bool tt_ok = tt.status == "completed";
  const double drop = tt_ok ? tt.history.front().j_hat - tt.history.back().j_hat : NAN;
  pass = pass && tt_ok && drop >= 0.05;
  detail += format("target tracking J_hat %.4f -> %.4f (drop %.4f, need 0.05)", tt.history.front().j_hat,
                   tt.history.back().j_hat, drop);

  const auto barrier_cfg = desk_config("barrier_desk.cfg", "barrier");
  const auto barrier = desk_run(barrier_cfg);
  int snapshots = 0;
  if (fs::exists(fs::path(barrier_cfg.output_dir) / "snapshots"))
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(fs::path(barrier_cfg.output_dir) / "snapshots"))
      ++snapshots;
  const bool barrier_ok = barrier.status == "completed" && finite_history(barrier) && snapshots > 0;
  pass = pass && barrier_ok;
  detail += format("; barrier %s with %d snapshots", barrier_ok ? "finite" : "FAILED", snapshots);

  const auto smoke = desk_run(desk_config("lq1_d50_smoke.cfg", "d50"));
  const bool smoke_ok = smoke.status == "completed" && finite_history(smoke) && smoke.history.back().iteration >= 100;
  pass = pass && smoke_ok;
  detail += format("; d=50 smoke %s at iteration %lld", smoke_ok ? "finite" : "FAILED",
                   static_cast<long long>(smoke.history.back().iteration));
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 8. Determinism.

Outcome determinism() {
  auto first_cfg = desk_config("lq1_desk.cfg", "det_a");
  first_cfg.trainer.iterations = 60;
  first_cfg.trainer.ensemble_size = 5000;
  first_cfg.trainer.batch_size = 250;
  first_cfg.metrics_every = 10;
  auto second_cfg = first_cfg;
  second_cfg.output_dir = (output_root() / "det_b").string();
  fs::remove_all(second_cfg.output_dir);
  const auto a = run_experiment(first_cfg), b = run_experiment(second_cfg);
  bool same = a.history.size() == b.history.size() && a.history.size() > 1;
  for (std::size_t k = 0; same && k < a.history.size(); ++k) {
    MetricsRecord x = a.history[k], y = b.history[k];
    x.wall_s = y.wall_s = 0.0;  // timing is the only nondeterministic column
    std::ostringstream ox, oy;
    write_metrics_row(ox, x);
    write_metrics_row(oy, y);
    same = ox.str() == oy.str();
  }
  return {same, format("%zu metric rows compared bitwise (wall_s excluded)", a.history.size())};
}

const std::map<std::string, std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {"1", {"gradient correctness", gradients}},
    {"2", {"Euler-Maruyama one-step moments", euler_moments}},
    {"3", {"ODE reference oracles", ode_oracles}},
    {"4", {"stationary time marginal", time_marginal}},
    {"5", {"LQ-1 d=1 desk run", lq1_desk}},
    {"6", {"systemic risk d=1 desk run", sr_desk}},
    {"7", {"qualitative benchmarks", qualitative}},
    {"8", {"determinism", determinism}},
};

bool run_one(const std::string& id) {
  const auto& [name, fn] = kCriteria.at(id);
  Outcome outcome;
  try {
    outcome = fn();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s criterion %s (%s): %s\n", outcome.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(),
              outcome.detail.c_str());
  std::fflush(stdout);
  return outcome.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2 || (std::string(argv[1]) != "all" && !kCriteria.count(argv[1]))) {
    std::fprintf(stderr, "usage: %s <1-8|all>\n", argv[0]);
    return 2;
  }
  bool ok = true;
  if (std::string(argv[1]) == "all") {
    for (const auto& [id, _] : kCriteria) ok = run_one(id) && ok;
  } else {
    ok = run_one(argv[1]);
  }
  return ok ? 0 : 1;
}
