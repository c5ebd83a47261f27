#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mortflow/smoothing.hpp"
#include "mortflow/tensor4.hpp"

namespace mortflow {

/// Linear tail beyond a transition point, blended in by smoothstep over
/// `blend_width`. direction = -1 extends toward lower x (the s1 frontier),
/// +1 toward higher x.
struct TailExtension {
  double x_star = 0.0;
  double slope = 0.0;
  double delta = 2.0;
  double blend_width = 3.0;
  int direction = -1;

  friend bool operator==(const TailExtension&, const TailExtension&) = default;
};

/// A SmoothFn optionally carrying a tail extension.
class ExtendedFn {
 public:
  ExtendedFn() = default;
  explicit ExtendedFn(SmoothFn base, std::optional<TailExtension> tail = std::nullopt)
      : base_(std::move(base)), tail_(tail) {}

  double operator()(double x) const;
  double base_value(double x) const { return base_(x); }

  const SmoothFn& base() const noexcept { return base_; }
  const std::optional<TailExtension>& tail() const noexcept { return tail_; }

  friend bool operator==(const ExtendedFn&, const ExtendedFn&) = default;

 private:
  SmoothFn base_;
  std::optional<TailExtension> tail_;
};

/// Joint-tangent tail: slope from a finite difference of width `delta` taken
/// on the interior side of x_star. Throws TailConfigError when x_star or
/// x_star -/+ delta lies outside the knot range.
ExtendedFn extend_tail(const SmoothFn& fn, double x_star, double delta = 2.0, double blend_width = 3.0,
                       int direction = -1);

/// Observed scores of one country, as produced by the Tucker/PCA stage.
struct ObservedCountry {
  std::string country;
  std::vector<int> years;  // ascending
  Matrix scores;           // years x N
  std::vector<double> e0;  // both-sex average life expectancy per year
};

struct CountryScoreSeries {
  std::string country;
  std::vector<int> years;
  Matrix scores;                  // raw scores, years x N
  std::vector<double> s1_smooth;  // temporal LOWESS of s1, per year
  std::vector<double> ds1_raw;    // (s1[i+1] - s1[i]) / gap, length n - 1
  std::vector<double> ds1_smooth; // same on the smoothed series
  std::vector<double> e0;

  std::size_t size() const { return years.size(); }
};

struct SeriesBuildResult {
  std::vector<CountryScoreSeries> series;
  std::vector<std::string> skipped;  // countries with fewer than 5 years
};

inline constexpr std::size_t kMinSeriesYears = 5;

/// Temporal LOWESS of s1 per country (bandwidth max(0.25, 10/n)) and forward
/// differences divided by the year gap.
SeriesBuildResult build_country_series(std::span<const ObservedCountry> countries);

struct TailConfig {
  double e0_star = 78.0;
  double delta = 2.0;
  double blend_width = 3.0;

  friend bool operator==(const TailConfig&, const TailConfig&) = default;
};

struct FlowConfig {
  double tau = 12.0;
  double window = 40.0;
  double bandwidth = 0.20;
  std::uint64_t seed = 0;
  std::size_t n_max = 20000;
  TailConfig tail;

  friend bool operator==(const FlowConfig&, const FlowConfig&) = default;
};

inline constexpr std::size_t kMinSpeedObservations = 20;

struct FlowField {
  ExtendedFn speed;                      // g*(s1)
  std::vector<ExtendedFn> trajectories;  // f_k*(s1) for scores 2..N
  ExtendedFn s1_of_e0;
  ExtendedFn e0_of_s1;
  double s1_star = 0.0;
  double s1_star_requested = 0.0;  // s1_of_e0(e0_star) before clamping into the data range
  EraKernel era;
  FlowConfig config;

  int origin() const { return era.origin; }
  Index components() const { return static_cast<Index>(trajectories.size()) + 1; }
  /// Canonical value of score `k` (0-based, k >= 1) at level s1.
  double trajectory(Index k, double s1) const { return trajectories.at(static_cast<std::size_t>(k - 1))(s1); }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// Speed by era-weighted LOWESS of smoothed velocity on smoothed s1 (pairs
/// ending at or before the origin); trajectories and the s1/e0 maps by plain
/// LOWESS of raw scores. All s1 functions get the tail extension at
/// s1* = s1_of_e0(e0_star), clamped into the common knot range.
FlowField fit_flowfield(std::span<const CountryScoreSeries> series, int origin, const FlowConfig& config);

struct CorrelationMatrix {
  Matrix r;                    // N x N Pearson correlations (NaN when undefined)
  std::vector<bool> undefined; // component has zero variance
};

/// Correlations of pooled raw forward differences of every score component.
CorrelationMatrix derivative_correlations(std::span<const CountryScoreSeries> series);

}  // namespace mortflow
