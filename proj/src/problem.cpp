#include "mfgpi/problem.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "mfgpi/errors.hpp"

namespace mfgpi {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kLq1:
      return "lq1";
    case Variant::kLq2:
      return "lq2";
    case Variant::kLq3:
      return "lq3";
    case Variant::kSystemicRisk:
      return "systemic_risk";
    case Variant::kTargetTracking:
      return "target_tracking";
    case Variant::kBarrier:
      return "barrier";
  }
  return "lq1";
}

Variant variant_from_string(const std::string& name) {
  if (name == "lq1") return Variant::kLq1;
  if (name == "lq2") return Variant::kLq2;
  if (name == "lq3") return Variant::kLq3;
  if (name == "systemic_risk" || name == "sr") return Variant::kSystemicRisk;
  if (name == "target_tracking" || name == "tt") return Variant::kTargetTracking;
  if (name == "barrier") return Variant::kBarrier;
  throw ConfigError("unknown problem variant '" + name + "'");
}

bool is_lq(Variant variant) {
  return variant == Variant::kLq1 || variant == Variant::kLq2 || variant == Variant::kLq3;
}

bool has_reference_solution(Variant variant) { return is_lq(variant) || variant == Variant::kSystemicRisk; }

Eigen::VectorXd TargetTrajectory::operator()(double t) const {
  if (kind == TargetKind::kZero) return Eigen::VectorXd::Zero(d);
  Eigen::VectorXd y(d);
  for (int i = 1; i <= d; ++i) y(i - 1) = std::sin(2.0 * std::numbers::pi * t + i * std::numbers::pi / 2.0);
  if (kind == TargetKind::kSines) return y;
  const double norm = y.norm();
  if (norm > 0.0) y /= norm;
  if (kind == TargetKind::kHelix) y *= 2.0 * t;
  return y;
}

// ---------------------------------------------------------------------------
// BucketStats

BucketStats BucketStats::from_particles(int steps, std::span<const int> time_index, const Eigen::MatrixXd& z,
                                        int kernel_cap, CounterRng& rng) {
  if (steps <= 0) throw ConfigError("number of time steps must be positive");
  if (static_cast<Eigen::Index>(time_index.size()) != z.cols())
    throw ShapeError("time indices and positions disagree on particle count");
  BucketStats stats;
  stats.steps_ = steps;
  stats.dim_ = static_cast<int>(z.rows());
  stats.has_kernel_ = kernel_cap > 0;
  const int buckets = steps + 1;
  stats.count_.assign(buckets, 0);
  stats.means_ = Eigen::MatrixXd::Zero(stats.dim_, buckets);

  std::vector<std::vector<int>> members(buckets);
  for (std::size_t j = 0; j < time_index.size(); ++j) {
    const int n = time_index[j];
    if (n < 0 || n > steps) throw IndexError("particle time index out of range");
    members[n].push_back(static_cast<int>(j));
  }
  stats.kernel_.resize(buckets);
  for (int n = 0; n < buckets; ++n) {
    auto& idx = members[n];
    stats.count_[n] = static_cast<int>(idx.size());
    if (idx.empty()) continue;
    // Fixed summation order: members are listed in particle order.
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(stats.dim_);
    for (int j : idx) sum += z.col(j);
    stats.means_.col(n) = sum / static_cast<double>(idx.size());
    if (kernel_cap <= 0) continue;
    const int take = std::min<int>(kernel_cap, static_cast<int>(idx.size()));
    if (take < static_cast<int>(idx.size())) {
      // Partial Fisher-Yates: the first `take` entries become a uniform subset.
      for (int k = 0; k < take; ++k) {
        const auto pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(idx.size() - k)));
        std::swap(idx[k], idx[pick]);
      }
    }
    stats.kernel_[n].resize(stats.dim_, take);
    for (int k = 0; k < take; ++k) stats.kernel_[n].col(k) = z.col(idx[k]);
  }
  stats.resolve();
  return stats;
}

BucketStats BucketStats::from_means(const Eigen::MatrixXd& means) {
  if (means.cols() < 2) throw ShapeError("mean table needs at least two time buckets");
  BucketStats stats;
  stats.steps_ = static_cast<int>(means.cols()) - 1;
  stats.dim_ = static_cast<int>(means.rows());
  stats.means_ = means;
  stats.count_.assign(means.cols(), 1);
  stats.kernel_.resize(means.cols());
  stats.has_kernel_ = false;
  stats.resolve();
  return stats;
}

void BucketStats::resolve() {
  const int buckets = steps_ + 1;
  resolved_.assign(buckets, -1);
  for (int n = 0; n < buckets; ++n) {
    if (count_[n] > 0) {
      resolved_[n] = n;
      continue;
    }
    for (int offset = 1; offset < buckets; ++offset) {
      if (n - offset >= 0 && count_[n - offset] > 0) {
        resolved_[n] = n - offset;
        break;
      }
      if (n + offset < buckets && count_[n + offset] > 0) {
        resolved_[n] = n + offset;
        break;
      }
    }
  }
}

void BucketStats::check_index(int n) const {
  if (n < 0 || n > steps_) throw IndexError("time bucket " + std::to_string(n) + " out of range");
}

int BucketStats::count(int n) const {
  check_index(n);
  return count_[n];
}

int BucketStats::resolved_bucket(int n) const {
  check_index(n);
  if (resolved_[n] < 0) throw MeasureError("all time buckets are empty");
  return resolved_[n];
}

Eigen::MatrixXd::ConstColXpr BucketStats::mean(int n) const { return means_.col(resolved_bucket(n)); }

const Eigen::MatrixXd& BucketStats::kernel_subsample(int n) const {
  const auto& sample = kernel_[resolved_bucket(n)];
  if (sample.cols() == 0) throw MeasureError("no kernel subsample available for bucket " + std::to_string(n));
  return sample;
}

Eigen::VectorXd bucket_mean(const BucketStats& stats, int n) { return stats.mean(n); }

double kernel_interaction(const Eigen::Ref<const Eigen::VectorXd>& z, int n, const BucketStats& stats, double c_f) {
  if (!(c_f > 0.0)) throw ConfigError("kernel width c_F must be positive");
  const Eigen::MatrixXd& sample = stats.kernel_subsample(n);
  if (sample.rows() != z.size()) throw ShapeError("kernel sample dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < sample.cols(); ++k) sum += std::exp(-c_f * (sample.col(k) - z).squaredNorm());
  return sum / static_cast<double>(sample.cols());
}

// ---------------------------------------------------------------------------
// Problems

double MfgProblem::constant(const std::string& name) const {
  const auto it = constants.find(name);
  if (it == constants.end()) throw ConfigError("problem '" + to_string(variant) + "' has no constant '" + name + "'");
  return it->second;
}

Eigen::VectorXd initial_state_sampler(Variant variant, int d, CounterRng& rng) {
  switch (variant) {
    case Variant::kLq1:
    case Variant::kLq2:
    case Variant::kLq3:
      return Eigen::VectorXd::Constant(d, rng.uniform(-1.0, 1.0));
    case Variant::kSystemicRisk:
      return Eigen::VectorXd::Constant(d, rng.uniform(-3.0, 3.0));
    case Variant::kTargetTracking: {
      Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
      z(0) = rng.uniform(-1.0, 1.0);
      return z;
    }
    case Variant::kBarrier: {
      Eigen::VectorXd z(d);
      for (int i = 0; i < d; ++i) z(i) = rng.normal();
      return z;
    }
  }
  return Eigen::VectorXd::Zero(d);
}

namespace {

using Constants = std::map<std::string, double>;

Constants apply_overrides(Constants base, const Constants& overrides, Variant variant) {
  for (const auto& [key, value] : overrides) {
    if (!base.contains(key))
      throw ConfigError("constant '" + key + "' is not defined for problem '" + to_string(variant) + "'");
    base[key] = value;
  }
  return base;
}

void wire_lq(MfgProblem& p) {
  const double c0 = p.constant("c0"), c1 = p.constant("c1"), c2 = p.constant("c2"), c3 = p.constant("c3"),
               c4 = p.constant("c4"), c5 = p.constant("c5"), cs = p.constant("c_sigma");
  if (c2 == 0.0) throw ConfigError("c2 must be nonzero for the LQ games");
  const TargetTrajectory target = p.target;
  const double T = p.T;
  const Eigen::VectorXd target_T = target(T);
  p.q = p.d;
  p.m = p.d;
  p.drift = [=](const PointEval& x, const ConstVecRef& u, VecOut out) {
    const auto mean = x.stats.mean(x.n);
    out = u + c0 * (mean - x.z);
    if (c1 != 0.0) out += c1 * (target(x.t) - mean);
  };
  p.diffusion = [=](const PointEval&, const ConstVecRef&, MatOut out) {
    out.setZero();
    out.diagonal().setConstant(cs);
  };
  p.running_cost = [=](const PointEval& x, const ConstVecRef& u) {
    double cost = c2 * u.squaredNorm() + c3 * (x.z - x.stats.mean(x.n)).squaredNorm();
    if (c4 != 0.0) cost += c4 * (x.z - target(x.t)).squaredNorm();
    return 0.5 * cost;
  };
  p.running_cost_grad_u = [=](const PointEval&, const ConstVecRef& u, VecOut out) { out = c2 * u; };
  p.drift_vjp_u = [](const PointEval&, const ConstVecRef&, const ConstVecRef& cot, VecOut out) { out = cot; };
  p.terminal_cost = [=](const PointEval& x) { return 0.5 * c5 * (x.z - target_T).squaredNorm() + 0.5; };
  p.terminal_cost_grad_z = [=](const PointEval& x, VecOut out) { out = c5 * (x.z - target_T); };
  p.sample_initial_guess = [d = p.d, cs, variant = p.variant](double t, CounterRng& rng) {
    Eigen::VectorXd z = initial_state_sampler(variant, d, rng);
    const double scale = cs * std::sqrt(t);
    for (int i = 0; i < d; ++i) z(i) += 5.0 * t + scale * rng.normal();
    return z;
  };
}

void wire_systemic_risk(MfgProblem& p) {
  const double c1 = p.constant("c1"), c2 = p.constant("c2"), c3 = p.constant("c3"), c4 = p.constant("c4"),
               c5 = p.constant("c5");
  p.q = 1;
  p.m = 1;
  p.drift = [=](const PointEval& x, const ConstVecRef& u, VecOut out) {
    out(0) = c1 * (x.stats.mean(x.n)(0) - x.z(0)) + u(0);
  };
  p.diffusion = [=](const PointEval&, const ConstVecRef&, MatOut out) { out(0, 0) = c2; };
  p.running_cost = [=](const PointEval& x, const ConstVecRef& u) {
    const double gap = x.stats.mean(x.n)(0) - x.z(0);
    return 0.5 * u(0) * u(0) - c3 * u(0) * gap + 0.5 * c4 * gap * gap;
  };
  p.running_cost_grad_u = [=](const PointEval& x, const ConstVecRef& u, VecOut out) {
    out(0) = u(0) - c3 * (x.stats.mean(x.n)(0) - x.z(0));
  };
  p.drift_vjp_u = [](const PointEval&, const ConstVecRef&, const ConstVecRef& cot, VecOut out) { out = cot; };
  p.terminal_cost = [=](const PointEval& x) {
    const double gap = x.stats.mean(x.n)(0) - x.z(0);
    return 0.5 * c5 * gap * gap;
  };
  p.terminal_cost_grad_z = [=](const PointEval& x, VecOut out) { out(0) = c5 * (x.z(0) - x.stats.mean(x.n)(0)); };
}

void wire_target_tracking(MfgProblem& p) {
  const double c1 = p.constant("c1"), c2 = p.constant("c2"), c4 = p.constant("c4"), cf = p.constant("c_F"),
               cs = p.constant("c_sigma");
  const TargetTrajectory target = p.target;
  const Eigen::VectorXd target_T = target(p.T);
  p.q = p.d;
  p.m = p.d;
  p.drift = [](const PointEval&, const ConstVecRef& u, VecOut out) { out = u; };
  p.diffusion = [=](const PointEval&, const ConstVecRef&, MatOut out) {
    out.setZero();
    out.diagonal().setConstant(cs);
  };
  p.running_cost = [=](const PointEval& x, const ConstVecRef& u) {
    return c1 * (x.z - target(x.t)).squaredNorm() + c2 * u.squaredNorm() + kernel_interaction(x.z, x.n, x.stats, cf);
  };
  p.running_cost_grad_u = [=](const PointEval&, const ConstVecRef& u, VecOut out) { out = 2.0 * c2 * u; };
  p.drift_vjp_u = [](const PointEval&, const ConstVecRef&, const ConstVecRef& cot, VecOut out) { out = cot; };
  p.terminal_cost = [=](const PointEval& x) { return 0.5 * c4 * (x.z - target_T).squaredNorm(); };
  p.terminal_cost_grad_z = [=](const PointEval& x, VecOut out) { out = c4 * (x.z - target_T); };
}

void wire_barrier(MfgProblem& p) {
  const double c0 = p.constant("c0"), c1 = p.constant("c1"), c2 = p.constant("c2"), c3 = p.constant("c3"),
               c4 = p.constant("c4"), cf = p.constant("c_F");
  const TargetTrajectory target = p.target;
  const Eigen::VectorXd target_T = target(p.T);
  const int d = p.d;
  const Eigen::VectorXd barrier = Eigen::VectorXd::Constant(d, 0.5);
  p.q = d;
  p.m = d;
  p.drift = [](const PointEval&, const ConstVecRef& u, VecOut out) { out = u; };
  p.diffusion = [=](const PointEval& x, const ConstVecRef&, MatOut out) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += std::sin((i + 1) + x.z(i));
    out.setZero();
    out.diagonal().setConstant(c1 / std::sqrt(static_cast<double>(d)) * s);
  };
  p.running_cost = [=](const PointEval& x, const ConstVecRef& u) {
    return c0 / (1.0 + c2 * (x.z - barrier).squaredNorm()) + c3 * u.squaredNorm() +
           kernel_interaction(x.z, x.n, x.stats, cf);
  };
  p.running_cost_grad_u = [=](const PointEval&, const ConstVecRef& u, VecOut out) { out = 2.0 * c3 * u; };
  p.drift_vjp_u = [](const PointEval&, const ConstVecRef&, const ConstVecRef& cot, VecOut out) { out = cot; };
  p.terminal_cost = [=](const PointEval& x) { return 0.5 * c4 * (x.z - target_T).squaredNorm(); };
  p.terminal_cost_grad_z = [=](const PointEval& x, VecOut out) { out = c4 * (x.z - target_T); };
}

}  // namespace

MfgProblem make_problem(Variant variant, int d, const std::map<std::string, double>& overrides, int steps) {
  if (d <= 0) throw ConfigError("state dimension must be positive");
  if (steps <= 0) throw ConfigError("number of time steps must be positive");
  MfgProblem p;
  p.variant = variant;
  p.d = d;
  p.T = 1.0;
  p.N = steps;
  p.initial_mean = Eigen::VectorXd::Zero(d);
  p.target = TargetTrajectory{TargetKind::kZero, d};
  const double inv_d = 1.0 / d;
  const double sigma_lq = 0.5 / std::sqrt(static_cast<double>(d));

  switch (variant) {
    case Variant::kLq1:
      p.constants = {{"c0", 0.0}, {"c1", 0.0}, {"c2", 1.0}, {"c3", inv_d},
                     {"c4", 0.0}, {"c5", inv_d}, {"c_sigma", sigma_lq}};
      break;
    case Variant::kLq2:
      p.constants = {{"c0", 1.0}, {"c1", 0.0}, {"c2", inv_d}, {"c3", inv_d},
                     {"c4", inv_d}, {"c5", inv_d}, {"c_sigma", sigma_lq}};
      p.target.kind = TargetKind::kCircle;
      break;
    case Variant::kLq3:
      p.constants = {{"c0", 1.0}, {"c1", -0.5}, {"c2", inv_d}, {"c3", inv_d},
                     {"c4", inv_d}, {"c5", inv_d}, {"c_sigma", sigma_lq}};
      p.target.kind = TargetKind::kHelix;
      break;
    case Variant::kSystemicRisk:
      if (d != 1) throw ConfigError("systemic_risk is defined for d = 1 only");
      p.constants = {{"c1", 1.0}, {"c2", 0.5}, {"c3", 1.0}, {"c4", 2.0}, {"c5", 1.0}};
      p.initial_half_width = 3.0;
      break;
    case Variant::kTargetTracking:
      p.constants = {{"c1", 1.0}, {"c2", 0.1}, {"c4", 10.0}, {"c_F", 1.0}, {"c_sigma", 0.5}};
      p.target.kind = TargetKind::kSines;
      break;
    case Variant::kBarrier:
      p.constants = {{"c0", 5.0}, {"c1", 0.1}, {"c2", 1.0}, {"c3", 0.1}, {"c4", 1.0}, {"c_F", 1.0}};
      p.target.kind = TargetKind::kSines;
      break;
  }
  p.constants = apply_overrides(std::move(p.constants), overrides, variant);

  if (is_lq(variant)) {
    wire_lq(p);
  } else if (variant == Variant::kSystemicRisk) {
    wire_systemic_risk(p);
  } else if (variant == Variant::kTargetTracking) {
    wire_target_tracking(p);
  } else {
    wire_barrier(p);
  }

  p.control_lower = Eigen::VectorXd::Constant(p.m, -std::numeric_limits<double>::infinity());
  p.control_upper = Eigen::VectorXd::Constant(p.m, std::numeric_limits<double>::infinity());
  p.sample_initial = [variant, d](CounterRng& rng) { return initial_state_sampler(variant, d, rng); };
  if (!p.sample_initial_guess) {
    p.sample_initial_guess = [variant, d](double, CounterRng& rng) { return initial_state_sampler(variant, d, rng); };
  }
  return p;
}

}  // namespace mfgpi
