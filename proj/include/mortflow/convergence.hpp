#pragma once

#include <span>
#include <string>
#include <vector>

#include "mortflow/flowfield.hpp"

namespace mortflow {

/// Deviations of one country on its own year grid.
struct DeviationTrack {
  std::vector<int> years;
  std::vector<double> values;
};

struct DeviationSeries {
  std::vector<std::string> countries;
  std::vector<DeviationTrack> speed;                    // per country: raw ds1 - g*(s1)
  std::vector<std::vector<DeviationTrack>> structural;  // [k - 1][country]: s_k - f_k*(s1), k >= 1
};

DeviationSeries compute_deviations(const FlowField& ff, std::span<const CountryScoreSeries> series);

/// Pooled lag-h autocorrelation: sum d(t) d(t+h) / sum d(t)^2, both sums over
/// the pairs where t and t+h are observed. Throws MissingData when no pair exists.
double pooled_autocorr(std::span<const DeviationTrack> tracks, int h);

inline constexpr double kMinBeta = 0.01;
inline constexpr int kMaxFitLag = 25;
inline constexpr double kMaxAlpha = 0.999;
inline constexpr double kDefaultAlpha = 0.95;

/// exp(slope) of an OLS fit (with intercept) of log beta(h) on h. betas[i]
/// holds beta(i + 1). Lags are used from h = 1 up to the first lag with
/// beta < 0.01 (or non-finite), and never beyond h = 25. The result is
/// clipped to [0, 0.999]. Throws InsufficientData with fewer than 2 lags.
double fit_rate(std::span<const double> betas);

struct RelaxationRates {
  double alpha_v = kDefaultAlpha;
  std::vector<double> alpha_s;  // per score component; alpha_s[0] = 0 (s1 is navigated)
  bool alpha_v_defaulted = false;
  std::vector<bool> alpha_s_defaulted;

  std::vector<double> half_lives() const;
  friend bool operator==(const RelaxationRates&, const RelaxationRates&) = default;
};

/// ln 2 / -ln(alpha); infinite for alpha >= 1 and 0 for alpha <= 0.
double half_life(double alpha);

/// Rates from beta(1..max_lag) of each deviation family, falling back to 0.95
/// where a rate cannot be fitted.
RelaxationRates estimate_rates(const DeviationSeries& devs, int max_lag = 30);

}  // namespace mortflow
