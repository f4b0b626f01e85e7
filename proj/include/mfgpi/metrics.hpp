#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include <Eigen/Core>

#include "mfgpi/networks.hpp"
#include "mfgpi/problem.hpp"
#include "mfgpi/reference.hpp"
#include "mfgpi/trainer.hpp"

namespace mfgpi {

/// Frozen evaluation points drawn from the initial law of the variant
/// (the diagonal segment D for the LQ and systemic-risk games).
struct TestPointSet {
  Eigen::MatrixXd rc;  // d x 256, cost estimation
  Eigen::MatrixXd re;  // d x 1000, value errors
};

TestPointSet make_test_points(const MfgProblem& problem, std::uint64_t seed, int rc_count = 256,
                              int re_count = 1000);

/// Feedback law evaluated on all paths at once: (n, z d x P) -> u m x P.
using BatchPolicy = std::function<Eigen::MatrixXd(int n, const Eigen::MatrixXd& z)>;

BatchPolicy network_policy(const ControlNet<float>& control, double h);
BatchPolicy reference_policy(const ReferenceEvaluator& evaluator, double h);

struct CostEstimate {
  double j_hat = 0.0;
  double sample_sd = 0.0;
  int paths = 0;
};

/// Euler-Maruyama paths from the columns of `starts`, left-rectangle
/// running cost plus g at time index N. Path p uses stream (seed, p).
CostEstimate simulate_cost(const MfgProblem& problem, const BatchPolicy& policy, const BucketStats& stats,
                           const Eigen::MatrixXd& starts, std::uint64_t seed);

/// J* = mean of v(0, z) over the given points.
double reference_cost(const ReferenceEvaluator& evaluator, const Eigen::MatrixXd& points);

double relative_cost(double j_hat, double j_star);

/// (RE_1, RE_inf) of approximate against exact values.
std::pair<double, double> relative_errors(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact);

template <typename Scalar>
Eigen::VectorXd initial_values(const ValueNet<Scalar>& value, const Eigen::MatrixXd& points);

template <typename Scalar>
std::pair<double, double> relative_errors(const ValueNet<Scalar>& value, const ReferenceEvaluator& evaluator,
                                          const Eigen::MatrixXd& points);

/// Fills RE_1, RE_inf, RC (when a reference is given) and J_hat.
void evaluate_metrics(const MfgProblem& problem, const Networks<float>& nets, const BucketStats& stats,
                      const TestPointSet& points, const ReferenceEvaluator* reference, std::uint64_t path_seed,
                      MetricsRecord& record);

}  // namespace mfgpi
