#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mortflow {

/// Piecewise-linear function through fitted knots; constant beyond the ends.
class SmoothFn {
 public:
  SmoothFn() = default;
  SmoothFn(std::vector<double> knots, std::vector<double> values);

  double operator()(double x) const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }
  bool empty() const noexcept { return knots_.empty(); }
  double min_x() const { return knots_.front(); }
  double max_x() const { return knots_.back(); }

  friend bool operator==(const SmoothFn&, const SmoothFn&) = default;

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Truncated exponential era weighting around an origin year.
struct EraKernel {
  int origin = 0;
  double tau = 12.0;    // half-life, years
  double window = 40.0; // hard window W, years

  friend bool operator==(const EraKernel&, const EraKernel&) = default;
};

inline constexpr std::size_t kMaxKnots = 1000;

/// Local-linear LOWESS, tricube kernel, no robustness iterations. Each local
/// neighbourhood is the smallest interval around the target holding a
/// `bandwidth` fraction of the total prior weight (a fraction of the points
/// when unweighted); prior weights multiply the tricube weights. Fitted at the
/// sorted unique x, or at 1000 quantile-spaced knots for larger inputs.
SmoothFn lowess(std::span<const double> x, std::span<const double> y, double bandwidth,
                std::optional<std::span<const double>> weights = std::nullopt);

/// exp(-(t0 - t) ln 2 / tau) for 0 <= t0 - t <= W; 0 beyond the window and
/// for years after the origin.
double era_weight(int year, const EraKernel& kernel);
std::vector<double> era_weights(std::span<const int> years, const EraKernel& kernel);

/// Era-weighted LOWESS by weighted bootstrap: min(3n, n_max) draws with
/// replacement, probability proportional to era weight, then plain LOWESS.
SmoothFn era_lowess(std::span<const double> x, std::span<const double> y, std::span<const int> years,
                    const EraKernel& kernel, double bandwidth, std::size_t n_max, std::uint64_t seed);

/// t^2 (3 - 2t) on [0, 1].
inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// SplitMix64 evaluated at successive counters; stateless apart from the counter.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1).
  double uniform() noexcept;
  double normal() noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mortflow
