#include "mfgpi/metrics.hpp"

#include <cmath>
#include <vector>

#include "mfgpi/errors.hpp"

namespace mfgpi {

TestPointSet make_test_points(const MfgProblem& problem, std::uint64_t seed, int rc_count, int re_count) {
  if (rc_count <= 0 || re_count <= 0) throw ConfigError("test point sets must be nonempty");
  TestPointSet points;
  CounterRng rc_rng(seed, StreamKind::kTestPoints, 0);
  CounterRng re_rng(seed, StreamKind::kTestPoints, 1);
  points.rc.resize(problem.d, rc_count);
  points.re.resize(problem.d, re_count);
  for (int k = 0; k < rc_count; ++k) points.rc.col(k) = problem.sample_initial(rc_rng);
  for (int k = 0; k < re_count; ++k) points.re.col(k) = problem.sample_initial(re_rng);
  return points;
}

BatchPolicy network_policy(const ControlNet<float>& control, double h) {
  return [&control, h](int n, const Eigen::MatrixXd& z) {
    const std::vector<int> index(z.cols(), n);
    const MatrixX<float> inputs = encode_inputs<float>(index, z, h);
    return Eigen::MatrixXd(control_forward(control, inputs, false).u.cast<double>());
  };
}

BatchPolicy reference_policy(const ReferenceEvaluator& evaluator, double h) {
  return [&evaluator, h](int n, const Eigen::MatrixXd& z) {
    Eigen::MatrixXd u(evaluator.dim(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) u.col(j) = evaluator.control(n * h, z.col(j));
    return u;
  };
}

CostEstimate simulate_cost(const MfgProblem& problem, const BatchPolicy& policy, const BucketStats& stats,
                           const Eigen::MatrixXd& starts, std::uint64_t seed) {
  const auto paths = static_cast<int>(starts.cols());
  if (paths <= 0) throw ConfigError("cost estimation needs at least one path");
  if (starts.rows() != problem.d) throw ShapeError("path start dimension mismatch");
  const double h = problem.h();
  const double sqrt_h = std::sqrt(h);
  std::vector<CounterRng> rngs;
  rngs.reserve(paths);
  for (int p = 0; p < paths; ++p) rngs.emplace_back(seed, StreamKind::kMetricPaths, static_cast<std::uint64_t>(p));

  Eigen::MatrixXd z = starts;
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(paths);
  Eigen::VectorXd drift(problem.d), zeta(problem.q);
  Eigen::MatrixXd sigma(problem.d, problem.q);
  for (int n = 0; n < problem.N; ++n) {
    const Eigen::MatrixXd u = policy(n, z);
    if (u.cols() != paths || u.rows() != problem.m) throw ShapeError("policy returned a control of wrong shape");
    const double t = problem.time(n);
    for (int p = 0; p < paths; ++p) {
      const PointEval at{n, t, z.col(p), stats};
      cost(p) += h * problem.running_cost(at, u.col(p));
      problem.drift(at, u.col(p), drift);
      problem.diffusion(at, u.col(p), sigma);
      for (int k = 0; k < problem.q; ++k) zeta(k) = rngs[p].normal();
      z.col(p) += h * drift + sqrt_h * (sigma * zeta);
    }
  }
  for (int p = 0; p < paths; ++p) cost(p) += problem.terminal_cost(PointEval{problem.N, problem.T, z.col(p), stats});
  if (!cost.allFinite()) throw DivergenceError("simulated cost is not finite");

  CostEstimate estimate;
  estimate.paths = paths;
  estimate.j_hat = cost.mean();
  if (paths > 1) estimate.sample_sd = std::sqrt((cost.array() - estimate.j_hat).square().sum() / (paths - 1));
  return estimate;
}

double reference_cost(const ReferenceEvaluator& evaluator, const Eigen::MatrixXd& points) {
  if (points.cols() == 0) throw MetricError("reference cost needs test points");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < points.cols(); ++k) sum += evaluator.value(0.0, points.col(k));
  return sum / static_cast<double>(points.cols());
}

double relative_cost(double j_hat, double j_star) {
  if (j_star == 0.0) throw MetricError("relative cost undefined for a zero optimal cost");
  return (j_hat - j_star) / j_star;
}

std::pair<double, double> relative_errors(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact) {
  if (approx.size() != exact.size() || exact.size() == 0) throw ShapeError("value vectors disagree in size");
  const double l1 = exact.cwiseAbs().sum();
  const double linf = exact.cwiseAbs().maxCoeff();
  if (l1 == 0.0 || linf == 0.0) throw MetricError("relative error undefined for a vanishing reference");
  const Eigen::VectorXd diff = (approx - exact).cwiseAbs();
  return {diff.sum() / l1, diff.maxCoeff() / linf};
}

template <typename Scalar>
Eigen::VectorXd initial_values(const ValueNet<Scalar>& value, const Eigen::MatrixXd& points) {
  const std::vector<int> index(points.cols(), 0);
  const MatrixX<Scalar> inputs = encode_inputs<Scalar>(index, points, value.time_step);
  return mlp_forward_batch(value.inner, inputs).row(0).transpose().template cast<double>();
}

template <typename Scalar>
std::pair<double, double> relative_errors(const ValueNet<Scalar>& value, const ReferenceEvaluator& evaluator,
                                          const Eigen::MatrixXd& points) {
  Eigen::VectorXd exact(points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) exact(k) = evaluator.value(0.0, points.col(k));
  return relative_errors(initial_values(value, points), exact);
}

void evaluate_metrics(const MfgProblem& problem, const Networks<float>& nets, const BucketStats& stats,
                      const TestPointSet& points, const ReferenceEvaluator* reference, std::uint64_t path_seed,
                      MetricsRecord& record) {
  record.j_hat = simulate_cost(problem, network_policy(nets.control, problem.h()), stats, points.rc, path_seed).j_hat;
  if (reference == nullptr) return;
  const auto [re1, reinf] = relative_errors(nets.value, *reference, points.re);
  record.re1 = re1;
  record.reinf = reinf;
  record.rc = relative_cost(record.j_hat, reference_cost(*reference, points.rc));
}

template Eigen::VectorXd initial_values<float>(const ValueNet<float>&, const Eigen::MatrixXd&);
template Eigen::VectorXd initial_values<double>(const ValueNet<double>&, const Eigen::MatrixXd&);
template std::pair<double, double> relative_errors<float>(const ValueNet<float>&, const ReferenceEvaluator&,
                                                          const Eigen::MatrixXd&);
template std::pair<double, double> relative_errors<double>(const ValueNet<double>&, const ReferenceEvaluator&,
                                                           const Eigen::MatrixXd&);

}  // namespace mfgpi
