#include "mfgpi/reference.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/LU>
#include <boost/numeric/odeint.hpp>

#include "mfgpi/errors.hpp"

namespace mfgpi {

namespace odeint = boost::numeric::odeint;

OdeSolution::OdeSolution(std::vector<double> t, std::vector<Eigen::VectorXd> y, std::vector<Eigen::VectorXd> dy)
    : t_(std::move(t)), y_(std::move(y)), dy_(std::move(dy)) {
  if (t_.size() < 2 || y_.size() != t_.size() || dy_.size() != t_.size())
    throw ShapeError("an ODE solution needs at least two nodes with values and slopes");
  if (t_.front() > t_.back()) {
    std::reverse(t_.begin(), t_.end());
    std::reverse(y_.begin(), y_.end());
    std::reverse(dy_.begin(), dy_.end());
  }
}

std::size_t OdeSolution::segment(double t) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(t_.back()));
  if (t < t_.front() - slack || t > t_.back() + slack)
    throw IndexError("time " + std::to_string(t) + " outside the solution interval");
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const auto k = static_cast<std::size_t>(std::distance(t_.begin(), it));
  return std::clamp<std::size_t>(k == 0 ? 0 : k - 1, 0, t_.size() - 2);
}

Eigen::VectorXd OdeSolution::operator()(double t) const {
  const std::size_t k = segment(t);
  const double h = t_[k + 1] - t_[k];
  const double s = (t - t_[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * dy_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
         (s3 - s2) * h * dy_[k + 1];
}

Eigen::VectorXd OdeSolution::derivative(double t) const {
  const std::size_t k = segment(t);
  const double h = t_[k + 1] - t_[k];
  const double s = (t - t_[k]) / h;
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * y_[k] + (-6 * s2 + 6 * s) * y_[k + 1]) / h + (3 * s2 - 4 * s + 1) * dy_[k] +
         (3 * s2 - 2 * s) * dy_[k + 1];
}

OdeSolution rk_integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                         const RkOptions& options) {
  if (!y0.allFinite()) throw IntegrationError("initial state is not finite");
  if (t0 == t1) throw IntegrationError("empty integration interval");
  if (!(options.rel_tol > 0.0) || !(options.abs_tol >= 0.0) || !(options.max_step > 0.0))
    throw ConfigError("integration tolerances must be positive");

  using State = std::vector<double>;
  const auto n = static_cast<Eigen::Index>(y0.size());
  Eigen::VectorXd y_buf(n), dy_buf(n);
  auto system = [&](const State& x, State& dxdt, double t) {
    y_buf = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    rhs(t, y_buf, dy_buf);
    dxdt.assign(dy_buf.data(), dy_buf.data() + n);
  };
  auto slope = [&](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd dy(n);
    rhs(t, y, dy);
    return dy;
  };

  auto stepper = odeint::make_controlled(options.abs_tol, options.rel_tol, odeint::runge_kutta_dopri5<State>());
  const double direction = t1 > t0 ? 1.0 : -1.0;
  const double snap = 1e-13 * std::max({1.0, std::abs(t0), std::abs(t1)});
  State x(y0.data(), y0.data() + n);
  double t = t0;
  double dt = direction * std::min(options.initial_step, std::abs(t1 - t0));

  std::vector<double> times{t0};
  std::vector<Eigen::VectorXd> values{y0};
  std::vector<Eigen::VectorXd> slopes{slope(t0, y0)};
  while (direction * (t1 - t) > snap) {
    if (std::abs(dt) > options.max_step) dt = direction * options.max_step;
    const bool last = direction * (t + dt - t1) >= 0.0;
    if (last) dt = t1 - t;
    const auto result = stepper.try_step(system, x, t, dt);
    if (result == odeint::success) {
      if (last || std::abs(t1 - t) <= snap) t = t1;
      Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
      if (!y.allFinite()) throw IntegrationError("solution blew up at t = " + std::to_string(t));
      times.push_back(t);
      slopes.push_back(slope(t, y));
      values.push_back(std::move(y));
    } else if (std::abs(dt) < options.min_step) {
      throw IntegrationError("step size underflow at t = " + std::to_string(t));
    }
  }
  return OdeSolution(std::move(times), std::move(values), std::move(slopes));
}

// ---------------------------------------------------------------------------

namespace {

// LQ state layout: [a, m (d), b (d), gamma].
struct LqLayout {
  int d;
  int size() const { return 2 * d + 2; }
  int m() const { return 1; }
  int b() const { return 1 + d; }
  int gamma() const { return 1 + 2 * d; }
};

OdeRhs lq_rhs(const MfgProblem& p) {
  const double c0 = p.constant("c0"), c1 = p.constant("c1"), c2 = p.constant("c2"), c3 = p.constant("c3"),
               c4 = p.constant("c4"), cs = p.constant("c_sigma");
  const LqLayout L{p.d};
  const TargetTrajectory target = p.target;
  const double d = p.d;
  return [=](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const double a = y(0);
    const auto m = y.segment(L.m(), L.d);
    const auto b = y.segment(L.b(), L.d);
    const Eigen::VectorXd zs = target(t);
    dy(0) = a * a / c2 + 2.0 * c0 * a - c3 - c4;
    dy.segment(L.m(), L.d) = -b / c2 + c1 * (zs - m);
    dy.segment(L.b(), L.d) = c0 * b - c4 * (m - zs);
    dy(L.gamma()) = -0.5 * (b.squaredNorm() / c2 + cs * cs * d * a + c4 * (m - zs).squaredNorm());
  };
}

Eigen::VectorXd lq_terminal_state(const MfgProblem& p, const Eigen::VectorXd& m_T) {
  const double c5 = p.constant("c5");
  const LqLayout L{p.d};
  const Eigen::VectorXd zs = p.target(p.T);
  Eigen::VectorXd y(L.size());
  y(0) = c5;
  y.segment(L.m(), L.d) = m_T;
  y.segment(L.b(), L.d) = c5 * (m_T - zs);
  y(L.gamma()) = 0.5 * c5 * (zs - m_T).squaredNorm();
  return y;
}

}  // namespace

ReferenceEvaluator::ReferenceEvaluator(const MfgProblem& problem, OdeSolution solution, Eigen::VectorXd sr_mean)
    : variant_(problem.variant), d_(problem.d), solution_(std::move(solution)), sr_mean_(std::move(sr_mean)) {
  if (!has_reference_solution(variant_)) throw ConfigError("no reference solution for " + to_string(variant_));
  c2_ = problem.constant("c2");
  c3_ = problem.constant("c3");
  if (variant_ == Variant::kSystemicRisk && sr_mean_.size() != 1)
    throw ShapeError("systemic risk reference needs a scalar mean");
}

LqCoefficients ReferenceEvaluator::lq_coefficients(double t) const {
  if (!is_lq(variant_)) throw ConfigError("LQ coefficients requested for " + to_string(variant_));
  const LqLayout L{d_};
  const Eigen::VectorXd y = solution_(t);
  const Eigen::VectorXd dy = solution_.derivative(t);
  LqCoefficients c;
  c.a = y(0);
  c.a_dot = dy(0);
  c.m = y.segment(L.m(), d_);
  c.m_dot = dy.segment(L.m(), d_);
  c.b = y.segment(L.b(), d_);
  c.b_dot = dy.segment(L.b(), d_);
  c.gamma = y(L.gamma());
  c.gamma_dot = dy(L.gamma());
  return c;
}

Eigen::VectorXd ReferenceEvaluator::mean(double t) const {
  if (variant_ == Variant::kSystemicRisk) return sr_mean_;
  return solution_(t).segment(LqLayout{d_}.m(), d_);
}

Eigen::MatrixXd ReferenceEvaluator::mean_table(int steps, double T) const {
  Eigen::MatrixXd out(d_, steps + 1);
  for (int n = 0; n <= steps; ++n) out.col(n) = mean(n * T / steps);
  return out;
}

double ReferenceEvaluator::value(double t, const Eigen::VectorXd& z) const {
  if (z.size() != d_) throw ShapeError("reference evaluation dimension mismatch");
  if (variant_ == Variant::kSystemicRisk) {
    const Eigen::VectorXd y = solution_(t);
    const double gap = z(0) - sr_mean_(0);
    return 0.5 * y(0) * gap * gap + y(1);
  }
  const LqLayout L{d_};
  const Eigen::VectorXd y = solution_(t);
  const Eigen::VectorXd dz = z - y.segment(L.m(), d_);
  return 0.5 * y(0) * dz.squaredNorm() + y.segment(L.b(), d_).dot(dz) + y(L.gamma()) + 0.5;
}

Eigen::VectorXd ReferenceEvaluator::control(double t, const Eigen::VectorXd& z) const {
  if (z.size() != d_) throw ShapeError("reference evaluation dimension mismatch");
  if (variant_ == Variant::kSystemicRisk) {
    const double eta = solution_(t)(0);
    return Eigen::VectorXd::Constant(1, (c3_ + eta) * (sr_mean_(0) - z(0)));
  }
  const LqLayout L{d_};
  const Eigen::VectorXd y = solution_(t);
  return -(y(0) * (z - y.segment(L.m(), d_)) + y.segment(L.b(), d_)) / c2_;
}

void ReferenceEvaluator::write_table(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  if (variant_ == Variant::kSystemicRisk) {
    out << "t,eta,gamma,m\n";
    for (std::size_t k = 0; k < solution_.nodes().size(); ++k) {
      const auto& y = solution_.node_value(k);
      out << solution_.nodes()[k] << ',' << y(0) << ',' << y(1) << ',' << sr_mean_(0) << '\n';
    }
  } else {
    const LqLayout L{d_};
    out << "t,a";
    for (int i = 1; i <= d_; ++i) out << ",b" << i;
    for (int i = 1; i <= d_; ++i) out << ",m" << i;
    out << ",gamma\n";
    for (std::size_t k = 0; k < solution_.nodes().size(); ++k) {
      const auto& y = solution_.node_value(k);
      out << solution_.nodes()[k] << ',' << y(0);
      for (int i = 0; i < d_; ++i) out << ',' << y(L.b() + i);
      for (int i = 0; i < d_; ++i) out << ',' << y(L.m() + i);
      out << ',' << y(L.gamma()) << '\n';
    }
  }
  out.precision(old_precision);
}

ReferenceEvaluator solve_lq_reference(const MfgProblem& problem, const Eigen::VectorXd& initial_mean,
                                      const RkOptions& options) {
  if (!is_lq(problem.variant)) throw ConfigError("solve_lq_reference needs an LQ game");
  const int d = problem.d;
  if (initial_mean.size() != d) throw ShapeError("initial mean dimension mismatch");
  const OdeRhs rhs = lq_rhs(problem);
  const LqLayout L{d};
  auto initial_mean_of = [&](const Eigen::VectorXd& m_T) {
    const OdeSolution sol = rk_integrate(rhs, lq_terminal_state(problem, m_T), problem.T, 0.0, options);
    return Eigen::VectorXd(sol(0.0).segment(L.m(), d));
  };

  // m(0) is affine in m(T); Newton with a difference Jacobian converges in
  // a couple of sweeps, up to the integration error.
  constexpr double kTolerance = 1e-10;
  constexpr int kMaxSweeps = 100;
  Eigen::VectorXd m_T = initial_mean;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const Eigen::VectorXd residual = initial_mean_of(m_T) - initial_mean;
    if (residual.lpNorm<Eigen::Infinity>() <= kTolerance) {
      converged = true;
      break;
    }
    Eigen::MatrixXd jacobian(d, d);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd shifted = m_T;
      shifted(k) += 1.0;
      jacobian.col(k) = initial_mean_of(shifted) - initial_mean - residual;
    }
    m_T -= jacobian.partialPivLu().solve(residual);
    if (!m_T.allFinite()) break;
  }
  if (!converged) throw ReferenceError("shooting on the terminal mean did not converge");
  return ReferenceEvaluator(problem, rk_integrate(rhs, lq_terminal_state(problem, m_T), problem.T, 0.0, options));
}

ReferenceEvaluator solve_sr_reference(const MfgProblem& problem, const RkOptions& options) {
  if (problem.variant != Variant::kSystemicRisk) throw ConfigError("solve_sr_reference needs the systemic risk game");
  const double c1 = problem.constant("c1"), c2 = problem.constant("c2"), c3 = problem.constant("c3"),
               c4 = problem.constant("c4"), c5 = problem.constant("c5");
  const OdeRhs rhs = [=](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy(0) = 2.0 * (c1 + c3) * y(0) + y(0) * y(0) - (c4 - c3 * c3);
    dy(1) = -0.5 * c2 * c2 * y(0);
  };
  Eigen::VectorXd terminal(2);
  terminal << c5, 0.0;
  return ReferenceEvaluator(problem, rk_integrate(rhs, terminal, problem.T, 0.0, options), problem.initial_mean);
}

ReferenceEvaluator solve_reference(const MfgProblem& problem, const RkOptions& options) {
  if (is_lq(problem.variant)) return solve_lq_reference(problem, problem.initial_mean, options);
  if (problem.variant == Variant::kSystemicRisk) return solve_sr_reference(problem, options);
  throw ConfigError("no reference solution for " + to_string(problem.variant));
}

double lq_hjb_residual(const MfgProblem& problem, const LqCoefficients& c, double t, const Eigen::VectorXd& z) {
  const double c0 = problem.constant("c0"), c1 = problem.constant("c1"), c2 = problem.constant("c2"),
               c3 = problem.constant("c3"), c4 = problem.constant("c4"), cs = problem.constant("c_sigma");
  const Eigen::VectorXd zs = problem.target(t);
  const Eigen::VectorXd dz = z - c.m;
  const Eigen::VectorXd grad = c.a * dz + c.b;
  const double dt_v = 0.5 * c.a_dot * dz.squaredNorm() - c.a * dz.dot(c.m_dot) + c.b_dot.dot(dz) - c.b.dot(c.m_dot) +
                      c.gamma_dot;
  const Eigen::VectorXd drift = c0 * (c.m - z) + c1 * (zs - c.m);
  return dt_v + drift.dot(grad) - grad.squaredNorm() / (2.0 * c2) + 0.5 * cs * cs * problem.d * c.a +
         0.5 * c3 * dz.squaredNorm() + 0.5 * c4 * (z - zs).squaredNorm();
}

double hjb_residual_check(const MfgProblem& problem, const ReferenceEvaluator& evaluator,
                          const std::vector<TimeSpacePoint>& samples) {
  double worst = 0.0;
  for (const auto& s : samples)
    worst = std::max(worst, std::abs(lq_hjb_residual(problem, evaluator.lq_coefficients(s.t), s.t, s.z)));
  return worst;
}

}  // namespace mfgpi
