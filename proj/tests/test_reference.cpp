#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mfgpi/errors.hpp"
#include "mfgpi/reference.hpp"

using namespace mfgpi;

namespace {

const OdeRhs decay = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -y; };

double exp_error(double rel_tol) {
  RkOptions options;
  options.rel_tol = rel_tol;
  options.abs_tol = rel_tol * 1e-2;
  const auto sol = rk_integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 1.0, options);
  return std::abs(sol(1.0)(0) - std::exp(-1.0)) / std::exp(-1.0);
}

std::vector<TimeSpacePoint> random_points(int d, int count, std::uint64_t seed) {
  CounterRng rng(seed, StreamKind::kUser);
  std::vector<TimeSpacePoint> points;
  for (int k = 0; k < count; ++k) {
    TimeSpacePoint p{rng.uniform(), Eigen::VectorXd(d)};
    for (int i = 0; i < d; ++i) p.z(i) = rng.uniform(-2, 2);
    points.push_back(p);
  }
  return points;
}

}  // namespace

TEST_CASE("Runge-Kutta integration") {
  CHECK(exp_error(1e-8) <= 1e-8);

  SUBCASE("zero field gives a constant solution") {
    const OdeRhs zero = [](double, const Eigen::VectorXd&, Eigen::VectorXd& dy) { dy.setZero(); };
    Eigen::VectorXd y0(2);
    y0 << 0.3, -7.0;
    const auto sol = rk_integrate(zero, y0, 0.0, 2.0);
    for (double t : {0.0, 0.37, 1.5, 2.0}) CHECK(sol(t) == y0);
  }
  SUBCASE("backward integration") {
    const auto sol = rk_integrate(decay, Eigen::VectorXd::Ones(1), 1.0, 0.0);
    CHECK(sol.t_min() == 0.0);
    CHECK(sol.t_max() == 1.0);
    CHECK(sol(0.0)(0) == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
  }
  SUBCASE("tighter tolerances never lose accuracy") {
    double previous = exp_error(1e-4);
    for (double tol = 5e-5; tol >= 1e-10; tol /= 2) {
      const double err = exp_error(tol);
      CHECK(err <= previous);
      previous = err;
    }
  }
  SUBCASE("blow-up underflows the step size") {
    const OdeRhs blowup = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y.cwiseProduct(y); };
    CHECK_THROWS_AS(rk_integrate(blowup, Eigen::VectorXd::Ones(1), 0.0, 2.0), IntegrationError);
  }
}

TEST_CASE("LQ-1 closed form") {
  const auto problem = make_problem(Variant::kLq1, 1);
  const auto ref = solve_reference(problem);
  CHECK(ref.lq_coefficients(problem.T).a == problem.constant("c5"));
  CounterRng rng(5, StreamKind::kUser);
  for (int k = 0; k < 100; ++k) {
    const double t = rng.uniform();
    const auto c = ref.lq_coefficients(t);
    CHECK(std::abs(c.a - 1.0) <= 1e-6);
    CHECK(std::abs(c.b(0)) <= 1e-6);
    CHECK(std::abs(c.m(0)) <= 1e-6);
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, rng.uniform(-1, 1));
    CHECK(std::abs(ref.value(0.0, z) - (0.5 * z(0) * z(0) + 0.625)) <= 1e-6);
  }
  CHECK(ref.value(0.0, Eigen::VectorXd::Ones(1)) == doctest::Approx(1.125).epsilon(1e-8));
  CHECK(ref.lq_coefficients(0.0).gamma == doctest::Approx(0.125).epsilon(1e-8));
  CHECK(ref.control(0.5, Eigen::VectorXd::Constant(1, 0.4))(0) == doctest::Approx(-0.4).epsilon(1e-8));
}

TEST_CASE("HJB residual of the LQ references") {
  for (auto variant : {Variant::kLq1, Variant::kLq2, Variant::kLq3}) {
    for (int d : {1, 3}) {
      CAPTURE(to_string(variant));
      CAPTURE(d);
      const auto problem = make_problem(variant, d);
      const auto ref = solve_reference(problem);
      const auto points = random_points(d, 100, 9);
      CHECK(hjb_residual_check(problem, ref, points) <= 1e-6);
      CHECK(ref.lq_coefficients(problem.T).a == problem.constant("c5"));
      // v(T, .) = g with the reference mean flow
      const auto stats = BucketStats::from_means(ref.mean_table(problem.N, problem.T));
      for (const auto& p : points)
        CHECK(ref.value(problem.T, p.z) ==
              doctest::Approx(problem.terminal_cost(PointEval{problem.N, problem.T, p.z, stats})).epsilon(1e-10));
    }
  }
}

TEST_CASE("perturbed coefficients leave an order-one residual") {
  const auto problem = make_problem(Variant::kLq1, 1);
  const auto ref = solve_reference(problem);
  // The residual becomes 0.0125 - 0.105 z^2, of order one away from its roots.
  double total = 0.0;
  for (const auto& p : random_points(1, 100, 10)) {
    auto c = ref.lq_coefficients(p.t);
    c.a += 0.1;
    total += std::abs(lq_hjb_residual(problem, c, p.t, p.z));
  }
  CHECK(total / 100 >= 0.1);
}

TEST_CASE("residual at the mean reduces to the constant terms") {
  const auto problem = make_problem(Variant::kLq2, 2);
  const auto ref = solve_reference(problem);
  const double cs = problem.constant("c_sigma"), c4 = problem.constant("c4");
  for (double t : {0.1, 0.5, 0.9}) {
    auto c = ref.lq_coefficients(t);
    c.b.setZero();
    c.b_dot.setZero();
    const double expected =
        c.gamma_dot + 0.5 * cs * cs * problem.d * c.a + 0.5 * c4 * (c.m - problem.target(t)).squaredNorm();
    CHECK(lq_hjb_residual(problem, c, t, c.m) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("systemic risk reference") {
  const auto problem = make_problem(Variant::kSystemicRisk, 1);
  const auto ref = solve_reference(problem);
  const auto& sol = ref.solution();
  const double eta0 = sol(0.0)(0);
  CHECK(eta0 > std::sqrt(5.0) - 2.0);
  CHECK(eta0 < 1.0);
  CHECK(sol(1.0)(1) == 0.0);
  CHECK(sol(1.0)(0) == 1.0);
  double previous_eta = eta0, previous_gamma = sol(0.0)(1);
  for (int k = 1; k <= 100; ++k) {
    const double t = k / 100.0;
    CHECK(sol(t)(0) >= previous_eta);
    CHECK(sol(t)(1) <= previous_gamma);
    previous_eta = sol(t)(0);
    previous_gamma = sol(t)(1);
  }
  CHECK(ref.mean(0.3).isZero(0.0));
  // u* = (c3 + eta)(mean - z)
  CHECK(ref.control(0.0, Eigen::VectorXd::Ones(1))(0) == doctest::Approx(-(1.0 + eta0)).epsilon(1e-12));
}

TEST_CASE("variants without a reference") {
  CHECK_THROWS_AS(solve_reference(make_problem(Variant::kBarrier, 2)), ConfigError);
  CHECK_THROWS_AS(solve_reference(make_problem(Variant::kTargetTracking, 2)), ConfigError);
}

TEST_CASE("reference table export") {
  const auto ref = solve_reference(make_problem(Variant::kLq1, 2));
  std::ostringstream out;
  ref.write_table(out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,a,b1,b2,m1,m2,gamma");
  CHECK(ref.mean_table(100, 1.0).cols() == 101);
}
