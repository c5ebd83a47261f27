#include "mortflow/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mortflow/error.hpp"

namespace mortflow {

DeviationSeries compute_deviations(const FlowField& ff, std::span<const CountryScoreSeries> series) {
  DeviationSeries out;
  const Index N = ff.components();
  out.structural.resize(static_cast<std::size_t>(N - 1));
  for (const auto& s : series) {
    if (s.scores.cols() != N) fail(ErrorKind::ShapeMismatch, "series and flow field differ in score dimension");
    out.countries.push_back(s.country);
    DeviationTrack speed;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      speed.years.push_back(s.years[i]);
      speed.values.push_back(s.ds1_raw[i] - ff.speed(s.scores(static_cast<Index>(i), 0)));
    }
    out.speed.push_back(std::move(speed));
    for (Index k = 1; k < N; ++k) {
      DeviationTrack track;
      track.years = s.years;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto row = static_cast<Index>(i);
        track.values.push_back(s.scores(row, k) - ff.trajectory(k, s.scores(row, 0)));
      }
      out.structural[static_cast<std::size_t>(k - 1)].push_back(std::move(track));
    }
  }
  return out;
}

double pooled_autocorr(std::span<const DeviationTrack> tracks, int h) {
  if (h < 0) fail(ErrorKind::ConfigError, "lag must be non-negative");
  double num = 0.0, den = 0.0;
  std::size_t pairs = 0;
  for (const auto& tr : tracks) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < tr.years.size(); ++i) {
      const int target = tr.years[i] + h;
      while (j < tr.years.size() && tr.years[j] < target) ++j;
      if (j == tr.years.size()) break;
      if (tr.years[j] != target) continue;
      num += tr.values[i] * tr.values[j];
      den += tr.values[i] * tr.values[i];
      ++pairs;
    }
  }
  if (pairs == 0) fail(ErrorKind::MissingData, "no observed pairs at lag " + std::to_string(h));
  if (h == 0) return den > 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  return num / den;
}

double fit_rate(std::span<const double> betas) {
  std::vector<double> hs, ys;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const int h = static_cast<int>(i) + 1;
    const double b = betas[i];
    if (h > kMaxFitLag || !std::isfinite(b) || b < kMinBeta) break;
    hs.push_back(h);
    ys.push_back(std::log(b));
  }
  if (hs.size() < 2) fail(ErrorKind::InsufficientData, "fewer than two usable autocorrelation lags");
  const double n = static_cast<double>(hs.size());
  double mh = 0.0, my = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    mh += hs[i];
    my += ys[i];
  }
  mh /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    sxy += (hs[i] - mh) * (ys[i] - my);
    sxx += (hs[i] - mh) * (hs[i] - mh);
  }
  return std::clamp(std::exp(sxy / sxx), 0.0, kMaxAlpha);
}

double half_life(double alpha) {
  if (alpha <= 0.0) return 0.0;
  if (alpha >= 1.0) return std::numeric_limits<double>::infinity();
  return std::numbers::ln2 / -std::log(alpha);
}

std::vector<double> RelaxationRates::half_lives() const {
  std::vector<double> out;
  out.push_back(half_life(alpha_v));
  for (std::size_t k = 1; k < alpha_s.size(); ++k) out.push_back(half_life(alpha_s[k]));
  return out;
}

namespace {

bool rate_for(std::span<const DeviationTrack> tracks, int max_lag, double& alpha) {
  std::vector<double> betas;
  for (int h = 1; h <= max_lag; ++h) {
    try {
      betas.push_back(pooled_autocorr(tracks, h));
    } catch (const Error&) {
      break;
    }
  }
  try {
    alpha = fit_rate(betas);
    return true;
  } catch (const Error&) {
    alpha = kDefaultAlpha;
    return false;
  }
}

}  // namespace

RelaxationRates estimate_rates(const DeviationSeries& devs, int max_lag) {
  RelaxationRates r;
  r.alpha_v_defaulted = !rate_for(devs.speed, max_lag, r.alpha_v);
  r.alpha_s.assign(devs.structural.size() + 1, 0.0);
  r.alpha_s_defaulted.assign(devs.structural.size() + 1, false);
  for (std::size_t k = 0; k < devs.structural.size(); ++k) {
    double a = kDefaultAlpha;
    r.alpha_s_defaulted[k + 1] = !rate_for(devs.structural[k], max_lag, a);
    r.alpha_s[k + 1] = a;
  }
  return r;
}

}  // namespace mortflow
