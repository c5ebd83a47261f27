#include "mortflow/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mortflow/error.hpp"

namespace mortflow {

double ExtendedFn::operator()(double x) const {
  if (!tail_) return base_(x);
  const TailExtension& t = *tail_;
  const double offset = (x - t.x_star) * t.direction;  // distance past the transition, outward
  if (offset <= 0.0) return base_(x);
  const double linear = base_(t.x_star) + t.slope * (x - t.x_star);
  if (offset > t.blend_width) return linear;
  const double w = smoothstep(offset / t.blend_width);
  return (1.0 - w) * base_(x) + w * linear;
}

ExtendedFn extend_tail(const SmoothFn& fn, double x_star, double delta, double blend_width, int direction) {
  if (direction != -1 && direction != 1) fail(ErrorKind::TailConfigError, "tail direction must be -1 or +1");
  if (!(delta > 0.0) || !(blend_width > 0.0)) fail(ErrorKind::TailConfigError, "tail delta and blend width must be positive");
  const double inner = x_star - direction * delta;
  const double lo = fn.min_x(), hi = fn.max_x();
  if (!(x_star >= lo && x_star <= hi && inner >= lo && inner <= hi)) {
    fail(ErrorKind::TailConfigError, "transition point outside the fitted range");
  }
  TailExtension tail;
  tail.x_star = x_star;
  tail.delta = delta;
  tail.blend_width = blend_width;
  tail.direction = direction;
  tail.slope = (fn(x_star) - fn(inner)) / (x_star - inner);
  return ExtendedFn(fn, tail);
}

SeriesBuildResult build_country_series(std::span<const ObservedCountry> countries) {
  SeriesBuildResult out;
  for (const auto& oc : countries) {
    const std::size_t n = oc.years.size();
    if (static_cast<std::size_t>(oc.scores.rows()) != n || oc.e0.size() != n) {
      fail(ErrorKind::ShapeMismatch, "score, year and e0 series differ in length for " + oc.country);
    }
    if (n < kMinSeriesYears) {
      out.skipped.push_back(oc.country);
      continue;
    }
    CountryScoreSeries s;
    s.country = oc.country;
    s.years = oc.years;
    s.scores = oc.scores;
    s.e0 = oc.e0;

    std::vector<double> t(n), s1(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = oc.years[i];
      s1[i] = oc.scores(static_cast<Index>(i), 0);
    }
    const double bw = std::min(1.0, std::max(0.25, 10.0 / static_cast<double>(n)));
    const SmoothFn smooth = lowess(t, s1, bw);
    s.s1_smooth.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.s1_smooth[i] = smooth(t[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double gap = t[i + 1] - t[i];
      if (!(gap > 0.0)) fail(ErrorKind::DataError, "years must be strictly increasing for " + oc.country);
      s.ds1_raw.push_back((s1[i + 1] - s1[i]) / gap);
      s.ds1_smooth.push_back((s.s1_smooth[i + 1] - s.s1_smooth[i]) / gap);
    }
    out.series.push_back(std::move(s));
  }
  return out;
}

FlowField fit_flowfield(std::span<const CountryScoreSeries> series, int origin, const FlowConfig& config) {
  if (series.empty()) fail(ErrorKind::InsufficientData, "no country series to fit");
  const Index N = series.front().scores.cols();

  FlowField ff;
  ff.config = config;
  ff.era = EraKernel{origin, config.tau, config.window};

  std::vector<double> sx, sy;
  std::vector<int> syear;
  std::vector<double> rs1, e0;
  std::vector<std::vector<double>> rsk(static_cast<std::size_t>(std::max<Index>(N - 1, 0)));
  for (const auto& s : series) {
    if (s.scores.cols() != N) fail(ErrorKind::ShapeMismatch, "country series use different score dimensions");
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s.years[i + 1] > origin) break;
      sx.push_back(s.s1_smooth[i]);
      sy.push_back(s.ds1_smooth[i]);
      syear.push_back(s.years[i]);
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.years[i] > origin) break;
      const auto row = static_cast<Index>(i);
      rs1.push_back(s.scores(row, 0));
      e0.push_back(s.e0[i]);
      for (Index k = 1; k < N; ++k) rsk[static_cast<std::size_t>(k - 1)].push_back(s.scores(row, k));
    }
  }

  const auto in_era = static_cast<std::size_t>(std::count_if(syear.begin(), syear.end(), [&](int y) {
    return era_weight(y, ff.era) > 0.0;
  }));
  if (in_era == 0) fail(ErrorKind::EmptyEra, "no speed observations inside the era window");
  if (in_era < kMinSpeedObservations) {
    fail(ErrorKind::InsufficientData, "only " + std::to_string(in_era) + " speed observations inside the era window");
  }

  const SmoothFn speed = era_lowess(sx, sy, syear, ff.era, config.bandwidth, config.n_max, config.seed);
  std::vector<SmoothFn> traj;
  for (const auto& yk : rsk) traj.push_back(lowess(rs1, yk, config.bandwidth));
  const SmoothFn s1_of_e0 = lowess(e0, rs1, config.bandwidth);
  const SmoothFn e0_of_s1 = lowess(rs1, e0, config.bandwidth);

  const TailConfig& tc = config.tail;
  ff.s1_star_requested = s1_of_e0(tc.e0_star);
  double lo = std::max(speed.min_x(), e0_of_s1.min_x());
  double hi = std::min(speed.max_x(), e0_of_s1.max_x());
  for (const auto& f : traj) {
    lo = std::max(lo, f.min_x());
    hi = std::min(hi, f.max_x());
  }
  hi -= tc.delta;
  if (lo > hi) fail(ErrorKind::TailConfigError, "fitted s1 range is narrower than the tail slope window");
  ff.s1_star = std::clamp(ff.s1_star_requested, lo, hi);

  ff.speed = extend_tail(speed, ff.s1_star, tc.delta, tc.blend_width, -1);
  for (const auto& f : traj) ff.trajectories.push_back(extend_tail(f, ff.s1_star, tc.delta, tc.blend_width, -1));
  ff.e0_of_s1 = extend_tail(e0_of_s1, ff.s1_star, tc.delta, tc.blend_width, -1);

  const double e_lo = s1_of_e0.min_x() + tc.delta;
  const double e_hi = s1_of_e0.max_x();
  if (e_lo > e_hi) fail(ErrorKind::TailConfigError, "fitted e0 range is narrower than the tail slope window");
  ff.s1_of_e0 = extend_tail(s1_of_e0, std::clamp(tc.e0_star, e_lo, e_hi), tc.delta, tc.blend_width, +1);
  return ff;
}

CorrelationMatrix derivative_correlations(std::span<const CountryScoreSeries> series) {
  if (series.empty()) fail(ErrorKind::InsufficientData, "no series");
  const Index N = series.front().scores.cols();
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const double gap = s.years[i + 1] - s.years[i];
      rows.push_back((s.scores.row(static_cast<Index>(i + 1)) - s.scores.row(static_cast<Index>(i))) / gap);
    }
  }
  if (rows.size() < 2) fail(ErrorKind::InsufficientData, "need at least two pooled differences");
  Matrix d(static_cast<Index>(rows.size()), N);
  for (std::size_t i = 0; i < rows.size(); ++i) d.row(static_cast<Index>(i)) = rows[i];
  const Matrix centered = d.rowwise() - d.colwise().mean();
  const Matrix cov = centered.transpose() * centered;

  CorrelationMatrix out;
  out.r = Matrix::Constant(N, N, std::numeric_limits<double>::quiet_NaN());
  out.undefined.assign(static_cast<std::size_t>(N), false);
  for (Index k = 0; k < N; ++k) {
    const double scale = std::max(1.0, std::sqrt(d.col(k).squaredNorm()));
    out.undefined[static_cast<std::size_t>(k)] = !(std::sqrt(cov(k, k)) > 1e-14 * scale);
  }
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < N; ++j) {
      if (out.undefined[static_cast<std::size_t>(i)] || out.undefined[static_cast<std::size_t>(j)]) continue;
      out.r(i, j) = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
    }
  }
  return out;
}

}  // namespace mortflow
