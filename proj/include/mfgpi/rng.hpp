#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace mfgpi {

/// Stream families. Each family owns a disjoint region of the key space so
/// that, e.g., training noise and metric paths never share draws.
enum class StreamKind : std::uint64_t {
  kInitialEnsemble = 1,
  kTransitionNoise = 2,
  kResetDraw = 3,
  kMinibatch = 4,
  kParameterInit = 5,
  kMetricPaths = 6,
  kTestPoints = 7,
  kKernelSubsample = 8,
  kUser = 9,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the n-th output is a pure function of
/// (key, n), where the key is derived from (seed, kind, a, b). Two streams
/// with different (kind, a, b) are independent, and a stream can be
/// recreated anywhere without touching shared state.
///
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  CounterRng(std::uint64_t seed, StreamKind kind, std::uint64_t a = 0, std::uint64_t b = 0) noexcept
      : key_(mix64(mix64(mix64(seed ^ 0x6A09E667F3BCC909ULL) + static_cast<std::uint64_t>(kind)) + a) ^
             mix64(b + 0x3C6EF372FE94F82BULL)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias for n << 2^64 is negligible.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mfgpi
