#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mfgpi/errors.hpp"
#include "mfgpi/problem.hpp"

using namespace mfgpi;

namespace {

BucketStats stats_from(int steps, const std::vector<int>& index, const Eigen::MatrixXd& z, int cap = 1024) {
  CounterRng rng(0, StreamKind::kUser);
  return BucketStats::from_particles(steps, index, z, cap, rng);
}

}  // namespace

TEST_CASE("bucket means") {
  Eigen::MatrixXd z(1, 3);
  z << -1, 1, 4;
  const auto stats = stats_from(3, {1, 1, 2}, z);
  CHECK(bucket_mean(stats, 1)(0) == 0.0);
  CHECK(bucket_mean(stats, 2)(0) == 4.0);
  CHECK(stats.count(1) == 2);
  CHECK(stats.count(0) == 0);
}

TEST_CASE("empty buckets fall back to the nearest nonempty bucket, earlier on ties") {
  Eigen::MatrixXd z(1, 2);
  z << 2, 6;
  const auto stats = stats_from(6, {1, 5}, z);
  CHECK(bucket_mean(stats, 0)(0) == 2.0);
  CHECK(bucket_mean(stats, 2)(0) == 2.0);
  CHECK(bucket_mean(stats, 3)(0) == 2.0);  // tie between 1 and 5
  CHECK(bucket_mean(stats, 4)(0) == 6.0);
  CHECK(bucket_mean(stats, 6)(0) == 6.0);
  CHECK_THROWS_AS(bucket_mean(stats, 7), IndexError);
  CHECK_THROWS_AS(bucket_mean(stats, -1), IndexError);
}

TEST_CASE("kernel interaction") {
  SUBCASE("self kernel") {
    Eigen::MatrixXd z(2, 1);
    z << 0.3, -0.2;
    const auto stats = stats_from(2, {0}, z);
    CHECK(kernel_interaction(z.col(0), 0, stats, 1.0) == 1.0);
  }
  SUBCASE("two-point average with |v|^2 = ln 2") {
    Eigen::VectorXd center(2), v(2);
    center << 0.1, 0.2;
    v << std::sqrt(std::log(2.0)), 0.0;
    Eigen::MatrixXd z(2, 2);
    z.col(0) = center + v;
    z.col(1) = center - v;
    const auto stats = stats_from(2, {1, 1}, z);
    CHECK(kernel_interaction(center, 1, stats, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("kernel decays for large c_F") {
    Eigen::MatrixXd z(1, 1);
    z << 1.0;
    const auto stats = stats_from(1, {0}, z);
    Eigen::VectorXd x(1);
    x << 0.0;
    CHECK(kernel_interaction(x, 0, stats, 1e3) < 1e-300);
  }
  SUBCASE("statistics without particles cannot evaluate the kernel") {
    const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(1, 3));
    CHECK_THROWS_AS(kernel_interaction(Eigen::VectorXd::Zero(1), 0, stats, 1.0), MeasureError);
  }
}

TEST_CASE("kernel subsample is capped") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(1, 50);
  const auto stats = stats_from(1, std::vector<int>(50, 0), z, 8);
  CHECK(stats.kernel_subsample(0).cols() == 8);
  CHECK(stats.count(0) == 50);
}

TEST_CASE("paper constants") {
  const auto lq1 = make_problem(Variant::kLq1, 1);
  CHECK(lq1.constant("c3") == 1.0);
  CHECK(lq1.constant("c5") == 1.0);
  CHECK(lq1.constant("c_sigma") == 0.5);
  CHECK(lq1.T == 1.0);
  CHECK(lq1.N == 100);

  const auto lq1_4 = make_problem(Variant::kLq1, 4);
  CHECK(lq1_4.constant("c3") == 0.25);
  CHECK(lq1_4.constant("c_sigma") == 0.25);

  const auto lq3 = make_problem(Variant::kLq3, 2);
  CHECK(lq3.constant("c1") == -0.5);
  CHECK(lq3.constant("c0") == 1.0);

  const auto sr = make_problem(Variant::kSystemicRisk, 1);
  CHECK(sr.constant("c4") == 2.0);
  CHECK(sr.constant("c2") == 0.5);

  const auto tt = make_problem(Variant::kTargetTracking, 2);
  CHECK(tt.constant("c4") == 10.0);
  CHECK(tt.constant("c2") == 0.1);

  CHECK_THROWS_AS(make_problem(Variant::kSystemicRisk, 2), ConfigError);
  CHECK_THROWS_AS(make_problem(Variant::kLq1, 1, {{"c9", 1.0}}), ConfigError);
  CHECK(make_problem(Variant::kLq1, 1, {{"c5", 2.0}}).constant("c5") == 2.0);
}

TEST_CASE("systemic risk running cost vanishes at the mean with zero control") {
  const auto p = make_problem(Variant::kSystemicRisk, 1);
  Eigen::MatrixXd z(1, 1);
  z << 0.7;
  const auto stats = stats_from(p.N, {3}, z);
  CHECK(p.running_cost(PointEval{3, p.time(3), z.col(0), stats}, Eigen::VectorXd::Zero(1)) == 0.0);
}

TEST_CASE("barrier running cost at the barrier point without interaction") {
  const auto p = make_problem(Variant::kBarrier, 2);
  // A single far-away particle makes the kernel term underflow to zero.
  Eigen::MatrixXd far = Eigen::MatrixXd::Constant(2, 1, 100.0);
  const auto stats = stats_from(p.N, {0}, far);
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(2, 0.5);
  CHECK(p.running_cost(PointEval{0, 0.0, z, stats}, Eigen::VectorXd::Zero(2)) == 5.0);
}

TEST_CASE("LQ terminal cost at the target is one half") {
  const auto p = make_problem(Variant::kLq2, 3);
  const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(3, p.N + 1));
  const Eigen::VectorXd z = p.target(p.T);
  CHECK(p.terminal_cost(PointEval{p.N, p.T, z, stats}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("LQ running cost is quadratic in the control") {
  const auto p = make_problem(Variant::kLq3, 2);
  Eigen::MatrixXd z(2, 1);
  z << 0.4, -0.3;
  const auto stats = stats_from(p.N, {10}, Eigen::MatrixXd::Constant(2, 1, 0.1));
  const PointEval x{10, p.time(10), z.col(0), stats};
  Eigen::VectorXd u(2);
  u << 0.7, -1.2;
  const double base = p.running_cost(x, Eigen::VectorXd::Zero(2));
  const double one = p.running_cost(x, u) - base;
  for (double lambda : {-2.0, 0.5, 3.0}) {
    const Eigen::VectorXd scaled = lambda * u;
    CHECK(p.running_cost(x, scaled) - base == doctest::Approx(lambda * lambda * one).epsilon(1e-12));
  }
}

TEST_CASE("target trajectories") {
  CounterRng rng(1, StreamKind::kUser);
  const TargetTrajectory circle{TargetKind::kCircle, 3};
  const TargetTrajectory helix{TargetKind::kHelix, 3};
  for (int k = 0; k < 100; ++k) {
    const double t = rng.uniform();
    CHECK(circle(t).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(helix(t).norm() == doctest::Approx(2.0 * t).epsilon(1e-14));
  }
  const TargetTrajectory zero{TargetKind::kZero, 2};
  CHECK(zero(0.3).isZero(0.0));
}

TEST_CASE("initial samplers") {
  CounterRng rng(3, StreamKind::kUser);
  SUBCASE("LQ samples lie on the diagonal") {
    for (int k = 0; k < 100; ++k) {
      const auto z = initial_state_sampler(Variant::kLq1, 3, rng);
      CHECK(z(0) == z(1));
      CHECK(z(1) == z(2));
      CHECK(std::abs(z(0)) <= 1.0);
    }
  }
  SUBCASE("systemic risk mean is zero within three standard errors") {
    const int n = 100000;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) sum += initial_state_sampler(Variant::kSystemicRisk, 1, rng)(0);
    const double sd = 6.0 / std::sqrt(12.0);
    CHECK(std::abs(sum / n) <= 3.0 * sd / std::sqrt(double(n)));
  }
  SUBCASE("barrier covariance is the identity") {
    const int n = 100000;
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    for (int k = 0; k < n; ++k) {
      const Eigen::Vector2d z = initial_state_sampler(Variant::kBarrier, 2, rng);
      second += z * z.transpose();
    }
    second /= n;
    // Each entry of the sample second moment has SD about sqrt(2/n) or sqrt(1/n).
    CHECK((second - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 5.0 * std::sqrt(2.0 / n));
  }
  SUBCASE("target tracking starts on a segment of the first axis") {
    const auto z = initial_state_sampler(Variant::kTargetTracking, 2, rng);
    CHECK(z(1) == 0.0);
    CHECK(std::abs(z(0)) <= 1.0);
  }
}

TEST_CASE("variant names") {
  for (auto v : {Variant::kLq1, Variant::kLq2, Variant::kLq3, Variant::kSystemicRisk, Variant::kTargetTracking,
                 Variant::kBarrier})
    CHECK(variant_from_string(to_string(v)) == v);
  CHECK(variant_from_string("sr") == Variant::kSystemicRisk);
  CHECK_THROWS_AS(variant_from_string("lq9"), ConfigError);
}
