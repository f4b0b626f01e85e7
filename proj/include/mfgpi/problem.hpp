#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfgpi/rng.hpp"

namespace mfgpi {

enum class Variant { kLq1, kLq2, kLq3, kSystemicRisk, kTargetTracking, kBarrier };

std::string to_string(Variant variant);
Variant variant_from_string(const std::string& name);
bool is_lq(Variant variant);
bool has_reference_solution(Variant variant);

/// A point x = (t, z) of the time-space grid. Time is carried as an index;
/// t = time_index * h.
struct StateSample {
  int time_index = 0;
  Eigen::VectorXd z;
};

enum class TargetKind { kZero, kCircle, kHelix, kSines };

/// Deterministic target path z*(t).
///   circle: y(t)/|y(t)| with y_i(t) = sin(2 pi t + i pi/2), i = 1..d
///   helix:  2t * y(t)/|y(t)|
///   sines:  y(t) itself
struct TargetTrajectory {
  TargetKind kind = TargetKind::kZero;
  int d = 1;

  Eigen::VectorXd operator()(double t) const;
};

/// Per-time-bucket statistics of a particle ensemble: counts, means and a
/// bounded random subsample for kernel interactions. Empty buckets resolve
/// to the nearest nonempty bucket by time index, ties toward earlier time.
class BucketStats {
 public:
  BucketStats() = default;

  static BucketStats from_particles(int steps, std::span<const int> time_index, const Eigen::MatrixXd& z,
                                    int kernel_cap, CounterRng& rng);

  /// Statistics with prescribed means (d x (steps+1)) and no particles,
  /// e.g. the reference mean path. Kernel interactions are unavailable.
  static BucketStats from_means(const Eigen::MatrixXd& means);

  int steps() const { return steps_; }
  int dim() const { return dim_; }
  int count(int n) const;
  /// Bucket whose data stands in for bucket n (n itself when nonempty).
  int resolved_bucket(int n) const;
  Eigen::MatrixXd::ConstColXpr mean(int n) const;
  const Eigen::MatrixXd& kernel_subsample(int n) const;
  bool has_kernel_samples() const { return has_kernel_; }

 private:
  void resolve();
  void check_index(int n) const;

  int steps_ = 0;
  int dim_ = 0;
  bool has_kernel_ = false;
  std::vector<int> count_;
  Eigen::MatrixXd means_;
  std::vector<Eigen::MatrixXd> kernel_;
  std::vector<int> resolved_;
};

Eigen::VectorXd bucket_mean(const BucketStats& stats, int n);

/// Average of exp(-c_F |z - y|^2) over the kernel subsample of bucket n.
double kernel_interaction(const Eigen::Ref<const Eigen::VectorXd>& z, int n, const BucketStats& stats, double c_f);

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecOut = Eigen::Ref<Eigen::VectorXd>;
using MatOut = Eigen::Ref<Eigen::MatrixXd>;

/// Arguments shared by every coefficient callback.
struct PointEval {
  int n;
  double t;
  ConstVecRef z;
  const BucketStats& stats;
};

/// A finite-horizon mean-field game on the grid {0, h, ..., T}. The full
/// drift is (1, drift_z) and the full diffusion is (0, diffusion_z): the time
/// component advances deterministically.
struct MfgProblem {
  Variant variant = Variant::kLq1;
  int d = 1;  // state
  int q = 1;  // noise
  int m = 1;  // control
  double T = 1.0;
  int N = 100;

  std::function<void(const PointEval&, const ConstVecRef& u, VecOut out)> drift;
  std::function<void(const PointEval&, const ConstVecRef& u, MatOut out)> diffusion;
  std::function<double(const PointEval&, const ConstVecRef& u)> running_cost;
  std::function<double(const PointEval&)> terminal_cost;

  // Derivatives used by the pathwise control gradient.
  std::function<void(const PointEval&, const ConstVecRef& u, VecOut out)> running_cost_grad_u;
  /// out = (d drift / d u)^T cotangent
  std::function<void(const PointEval&, const ConstVecRef& u, const ConstVecRef& cotangent, VecOut out)> drift_vjp_u;
  /// out = (d (diffusion * noise) / d u)^T cotangent; empty when the
  /// diffusion does not depend on the control.
  std::function<void(const PointEval&, const ConstVecRef& u, const ConstVecRef& noise, const ConstVecRef& cotangent,
                     VecOut out)>
      diffusion_vjp_u;
  std::function<void(const PointEval&, VecOut out)> terminal_cost_grad_z;

  std::function<Eigen::VectorXd(CounterRng&)> sample_initial;
  /// Spatial draw of the initial guess of the equilibrium measure at time t.
  std::function<Eigen::VectorXd(double t, CounterRng&)> sample_initial_guess;

  Eigen::VectorXd control_lower;
  Eigen::VectorXd control_upper;
  TargetTrajectory target;
  std::map<std::string, double> constants;
  /// Half-width c of the diagonal segment D = {s 1_d : |s| <= c}.
  double initial_half_width = 1.0;
  Eigen::VectorXd initial_mean;

  double h() const { return T / N; }
  double time(int n) const { return n * h(); }
  double constant(const std::string& name) const;
};

/// Builds one of the benchmark games. `overrides` replaces named constants
/// (c0..c5, c_sigma, c_F); `steps` is N.
MfgProblem make_problem(Variant variant, int d, const std::map<std::string, double>& overrides = {}, int steps = 100);

/// Draw from the initial law of the variant.
Eigen::VectorXd initial_state_sampler(Variant variant, int d, CounterRng& rng);

}  // namespace mfgpi
