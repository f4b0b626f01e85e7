#include <doctest.h>

#include <set>
#include <sstream>

#include "mfgpi/errors.hpp"
#include "mfgpi/measure.hpp"
#include "support.hpp"

using namespace mfgpi;

TEST_CASE("initial ensemble") {
  const auto problem = make_problem(Variant::kLq1, 1);
  const auto ensemble = init_ensemble(problem, 5000, 3);
  CHECK(ensemble.size() == 5000);
  CHECK(ensemble.iteration == 0);
  for (int n : ensemble.time_index) {
    CHECK(n >= 0);
    CHECK(n < problem.N);
  }
  CHECK_THROWS_AS(init_ensemble(problem, 0, 3), ConfigError);

  SUBCASE("deterministic per seed") {
    const auto again = init_ensemble(problem, 5000, 3);
    CHECK(again.z == ensemble.z);
    CHECK(again.time_index == ensemble.time_index);
    CHECK(init_ensemble(problem, 5000, 4).z != ensemble.z);
  }
}

TEST_CASE("LQ initial guess is a drifting diffusion") {
  // Z_0 + 5t + c_sigma sqrt(t) xi: mean 5nh, variance 1/3 + c_sigma^2 t.
  const auto problem = make_problem(Variant::kLq1, 1);
  const int n = 60;
  const double t = problem.time(n);
  const int draws = 100000;
  double sum = 0.0;
  for (int k = 0; k < draws; ++k) {
    CounterRng rng(11, StreamKind::kUser, static_cast<std::uint64_t>(k));
    sum += problem.sample_initial_guess(t, rng)(0);
  }
  const double sd = std::sqrt(1.0 / 3.0 + 0.25 * t);
  CHECK(std::abs(sum / draws - 5.0 * t) <= 3.0 * sd / std::sqrt(double(draws)));

  SUBCASE("time zero is the initial law") {
    CounterRng rng(1, StreamKind::kUser);
    for (int k = 0; k < 100; ++k) CHECK(std::abs(problem.sample_initial_guess(0.0, rng)(0)) <= 1.0);
  }
}

TEST_CASE("random map") {
  const auto problem = make_problem(Variant::kLq1, 2);
  const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(2, problem.N + 1));

  SUBCASE("reset at the horizon") {
    StateSample x{problem.N, Eigen::VectorXd::Constant(2, 7.0)};
    const auto noise = draw_transition_noise(problem, x, 1, 0, 0);
    CHECK(noise.zeta.size() == 0);
    const auto y = random_map(problem, x, stats, Eigen::VectorXd::Zero(2), noise);
    CHECK(y.time_index == 0);
    CHECK(y.z == noise.reset);
    CHECK(y.z(0) == y.z(1));
  }
  SUBCASE("drift-free and noise-free step only advances time") {
    const auto p = testing::constant_coefficient_problem(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2));
    StateSample x{3, Eigen::Vector2d(0.25, -1.0)};
    const auto y = random_map(p, x, stats, Eigen::VectorXd::Zero(2), draw_transition_noise(p, x, 1, 0, 0));
    CHECK(y.time_index == 4);
    CHECK(y.z == x.z);
  }
  SUBCASE("missing noise is a shape error") {
    StateSample x{3, Eigen::Vector2d(0.25, -1.0)};
    CHECK_THROWS_AS(random_map(problem, x, stats, Eigen::VectorXd::Zero(2), TransitionNoise{}), ShapeError);
  }
}

TEST_CASE("one-step moments with constant coefficients") {
  Eigen::Vector2d b(0.5, -1.0);
  Eigen::Matrix2d sigma;
  sigma << 0.3, 0.0, 0.1, 0.2;
  const auto p = testing::constant_coefficient_problem(b, sigma);
  const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(2, p.N + 1));
  const StateSample x{2, Eigen::Vector2d(1.0, 2.0)};
  const int draws = 100000;
  Eigen::MatrixXd y(2, draws);
  for (int k = 0; k < draws; ++k)
    y.col(k) = random_map(p, x, stats, Eigen::VectorXd::Zero(2), draw_transition_noise(p, x, 5, k, 0)).z;
  const double h = p.h();
  const Eigen::Vector2d mean = y.rowwise().mean();
  const Eigen::Matrix2d cov = (y.colwise() - mean) * (y.colwise() - mean).transpose() / (draws - 1);
  const Eigen::Matrix2d cov_exact = sigma * sigma.transpose() * h;
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean(i) - (x.z(i) + b(i) * h)) <= 3.0 * std::sqrt(cov_exact(i, i) / draws));
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((cov_exact(i, i) * cov_exact(j, j) + cov_exact(i, j) * cov_exact(i, j)) / draws);
      CHECK(std::abs(cov(i, j) - cov_exact(i, j)) <= 3.0 * se);
    }
  }
}

TEST_CASE("minibatch selection") {
  CounterRng rng(1, StreamKind::kUser);
  SUBCASE("full partition") {
    const auto [a, b] = select_minibatches(4, 2, rng);
    std::set<int> all(a.begin(), a.end());
    all.insert(b.begin(), b.end());
    CHECK(all == std::set<int>{0, 1, 2, 3});
  }
  SUBCASE("empty batches") {
    const auto [a, b] = select_minibatches(4, 0, rng);
    CHECK(a.empty());
    CHECK(b.empty());
  }
  SUBCASE("too large") { CHECK_THROWS_AS(select_minibatches(5, 3, rng), ConfigError); }
  SUBCASE("disjoint and uniform") {
    const int M = 20, B = 4, draws = 10000;
    std::vector<int> hits(M, 0);
    for (int k = 0; k < draws; ++k) {
      const auto [a, b] = select_minibatches(M, B, rng);
      std::set<int> seen(a.begin(), a.end());
      for (int j : b) CHECK_FALSE(seen.count(j));
      for (int j : a) ++hits[j];
    }
    const double p = double(B) / M;
    const double sd = std::sqrt(draws * p * (1 - p));
    for (int j = 0; j < M; ++j) CHECK(std::abs(hits[j] - draws * p) <= 4.0 * sd);
  }
}

TEST_CASE("applying transitions") {
  const auto problem = make_problem(Variant::kLq1, 1);
  auto ensemble = init_ensemble(problem, 10, 1);
  const auto before = ensemble;

  apply_transitions(ensemble, {});
  CHECK(ensemble.iteration == 1);
  CHECK(ensemble.z == before.z);

  Transition tr;
  tr.particle = 4;
  tr.destination = StateSample{7, Eigen::VectorXd::Constant(1, 42.0)};
  const std::vector<Transition> one{tr};
  apply_transitions(ensemble, one);
  CHECK(ensemble.iteration == 2);
  for (int m = 0; m < 10; ++m) {
    if (m == 4) continue;
    CHECK(ensemble.z(0, m) == before.z(0, m));
    CHECK(ensemble.time_index[m] == before.time_index[m]);
  }
  CHECK(ensemble.z(0, 4) == 42.0);
  CHECK(ensemble.time_index[4] == 7);

  const std::vector<Transition> twice{tr, tr};
  CHECK_THROWS_AS(apply_transitions(ensemble, twice), ConsistencyError);
}

TEST_CASE("time indices cycle without skipping") {
  const auto problem = make_problem(Variant::kLq1, 1, {}, 5);
  const auto stats = BucketStats::from_means(Eigen::MatrixXd::Zero(1, problem.N + 1));
  StateSample x{0, Eigen::VectorXd::Zero(1)};
  for (int k = 0; k < 20; ++k) {
    const int before = x.time_index;
    x = random_map(problem, x, stats, Eigen::VectorXd::Zero(1), draw_transition_noise(problem, x, 1, 0, k));
    CHECK(x.time_index == (before + 1) % (problem.N + 1));
  }
}

TEST_CASE("snapshot format") {
  const auto problem = make_problem(Variant::kBarrier, 2);
  const auto ensemble = init_ensemble(problem, 3, 1);
  std::ostringstream out;
  write_snapshot(out, ensemble);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "iteration,time_index,z1,z2");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  CHECK(rows == 3);
}
