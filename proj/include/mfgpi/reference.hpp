#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "mfgpi/problem.hpp"

namespace mfgpi {

using OdeRhs = std::function<void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt)>;

struct RkOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = 1e-3;
  double initial_step = 1e-4;
  double min_step = 1e-13;
};

/// Accepted steps of an adaptive integration with cubic Hermite dense
/// output. Nodes are stored in increasing time whatever the direction of
/// integration.
class OdeSolution {
 public:
  OdeSolution() = default;
  OdeSolution(std::vector<double> t, std::vector<Eigen::VectorXd> y, std::vector<Eigen::VectorXd> dy);

  double t_min() const { return t_.front(); }
  double t_max() const { return t_.back(); }
  int dim() const { return static_cast<int>(y_.front().size()); }
  const std::vector<double>& nodes() const { return t_; }
  const Eigen::VectorXd& node_value(std::size_t k) const { return y_[k]; }

  Eigen::VectorXd operator()(double t) const;
  /// Derivative of the interpolant (not the right-hand side).
  Eigen::VectorXd derivative(double t) const;

 private:
  std::size_t segment(double t) const;

  std::vector<double> t_;
  std::vector<Eigen::VectorXd> y_;
  std::vector<Eigen::VectorXd> dy_;
};

/// Dormand-Prince 5(4) with local error control |err| <= abs_tol + rel_tol |y|.
/// t1 < t0 integrates backward. Throws IntegrationError when the step size
/// underflows.
OdeSolution rk_integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                         const RkOptions& options = {});

/// Ansatz coefficients of the LQ value function at one time, together with
/// their time derivatives.
struct LqCoefficients {
  double a = 0.0, a_dot = 0.0;
  Eigen::VectorXd m, m_dot;
  Eigen::VectorXd b, b_dot;
  double gamma = 0.0, gamma_dot = 0.0;
};

/// Exact value function and optimal control of an LQ or systemic-risk game.
class ReferenceEvaluator {
 public:
  ReferenceEvaluator(const MfgProblem& problem, OdeSolution solution, Eigen::VectorXd sr_mean = {});

  Variant variant() const { return variant_; }
  int dim() const { return d_; }
  const OdeSolution& solution() const { return solution_; }

  double value(double t, const Eigen::VectorXd& z) const;
  Eigen::VectorXd control(double t, const Eigen::VectorXd& z) const;
  Eigen::VectorXd mean(double t) const;
  /// Means at the grid times n T / steps, one column per n.
  Eigen::MatrixXd mean_table(int steps, double T) const;
  /// LQ only.
  LqCoefficients lq_coefficients(double t) const;

  /// Rows of t followed by the solution components (a, b, m, gamma for LQ;
  /// eta, gamma, m for systemic risk) at every accepted node.
  void write_table(std::ostream& out) const;

 private:
  Variant variant_;
  int d_;
  double c2_ = 1.0, c3_ = 0.0;
  OdeSolution solution_;
  Eigen::VectorXd sr_mean_;
};

/// Solves a, then the forward-backward (m, b) pair by Newton shooting on
/// m(T), then gamma. Throws ReferenceError if shooting does not converge.
ReferenceEvaluator solve_lq_reference(const MfgProblem& problem, const Eigen::VectorXd& initial_mean,
                                      const RkOptions& options = {});

ReferenceEvaluator solve_sr_reference(const MfgProblem& problem, const RkOptions& options = {});

/// Either of the above according to the variant; ConfigError otherwise.
ReferenceEvaluator solve_reference(const MfgProblem& problem, const RkOptions& options = {});

/// Residual of the HJB equation with the optimal control substituted.
double lq_hjb_residual(const MfgProblem& problem, const LqCoefficients& coeffs, double t, const Eigen::VectorXd& z);

struct TimeSpacePoint {
  double t;
  Eigen::VectorXd z;
};

double hjb_residual_check(const MfgProblem& problem, const ReferenceEvaluator& evaluator,
                          const std::vector<TimeSpacePoint>& samples);

}  // namespace mfgpi
