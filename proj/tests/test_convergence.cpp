#include <doctest.h>

#include <cmath>
#include <random>

#include "mortflow/convergence.hpp"
#include "mortflow/error.hpp"

using namespace mortflow;

namespace {

std::vector<DeviationTrack> ar1_tracks(int countries, int years, double rho, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n;
  std::vector<DeviationTrack> out;
  for (int c = 0; c < countries; ++c) {
    DeviationTrack tr;
    double x = n(rng) / std::sqrt(1.0 - rho * rho);
    for (int t = 0; t < years; ++t) {
      tr.years.push_back(1800 + t);
      tr.values.push_back(x);
      x = rho * x + n(rng);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

// A flow field whose speed is the constant -0.1 and whose trajectories are
// f_k(s1) = c_k s1, with no tail.
FlowField linear_field(std::vector<double> c) {
  FlowField ff;
  std::vector<double> x{-100.0, 100.0};
  ff.speed = ExtendedFn(SmoothFn(x, {-0.1, -0.1}));
  for (double ck : c) ff.trajectories.emplace_back(SmoothFn(x, {-100.0 * ck, 100.0 * ck}));
  return ff;
}

CountryScoreSeries canonical_series(const std::vector<double>& c, int years, double offset2) {
  CountryScoreSeries s;
  s.country = "X";
  s.scores.resize(years, static_cast<Index>(c.size()) + 1);
  double s1 = 5.0;
  for (int t = 0; t < years; ++t) {
    s.years.push_back(1900 + t);
    s.scores(t, 0) = s1;
    for (std::size_t k = 0; k < c.size(); ++k) s.scores(t, static_cast<Index>(k) + 1) = c[k] * s1 + (k == 0 ? offset2 : 0.0);
    s.e0.push_back(70.0);
    if (t + 1 < years) {
      s.ds1_raw.push_back(-0.1);
      s.ds1_smooth.push_back(-0.1);
    }
    s.s1_smooth.push_back(s1);
    s1 -= 0.1;
  }
  return s;
}

}  // namespace

TEST_CASE("lag zero is exactly one") {
  const auto tr = ar1_tracks(3, 50, 0.7, 1);
  CHECK(pooled_autocorr(tr, 0) == 1.0);
}

TEST_CASE("pooled autocorrelation of AR(1) deviations tracks rho^h") {
  // Average over replicate panels of 10 countries x 200 years.
  const int reps = 20;
  std::vector<double> mean(11, 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto tr = ar1_tracks(10, 200, 0.9, 100 + static_cast<unsigned>(r));
    for (int h = 1; h <= 10; ++h) mean[static_cast<std::size_t>(h)] += pooled_autocorr(tr, h) / reps;
  }
  for (int h = 1; h <= 10; ++h) CHECK(std::abs(mean[static_cast<std::size_t>(h)] - std::pow(0.9, h)) < 0.05);
}

TEST_CASE("white-noise deviations have near-zero autocorrelation") {
  const auto tr = ar1_tracks(10, 200, 0.0, 7);
  for (int h = 1; h <= 3; ++h) CHECK(std::abs(pooled_autocorr(tr, h)) < 0.05);
}

TEST_CASE("pairs across gaps are skipped, not interpolated") {
  DeviationTrack tr{{2000, 2001, 2003, 2004}, {1.0, 2.0, 3.0, 4.0}};
  const std::vector<DeviationTrack> v{tr};
  // Lag 1 pairs: (2000,2001), (2003,2004).
  CHECK(pooled_autocorr(v, 1) == doctest::Approx((1.0 * 2.0 + 3.0 * 4.0) / (1.0 + 9.0)));
  // Lag 2 pair: (2001,2003) only.
  CHECK(pooled_autocorr(v, 2) == doctest::Approx(2.0 * 3.0 / 4.0));
  try {
    pooled_autocorr(v, 10);
    FAIL("expected MissingData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingData);
  }
}

TEST_CASE("fit_rate on exact exponentials") {
  std::vector<double> b9, b5;
  for (int h = 1; h <= 30; ++h) {
    b9.push_back(std::pow(0.9, h));
    b5.push_back(std::pow(0.5, h));
  }
  CHECK(std::abs(fit_rate(b9) - 0.9) < 1e-10);
  const double a5 = fit_rate(b5);
  CHECK(std::abs(a5 - 0.5) < 1e-10);
  CHECK(half_life(a5) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_rate: lag screening, clipping and errors") {
  std::vector<double> grow{1.1, 1.21, 1.331};
  CHECK(fit_rate(grow) == kMaxAlpha);
  std::vector<double> one{0.5, 0.001, 0.5};
  CHECK_THROWS_AS(fit_rate(one), Error);
  std::vector<double> nan{0.5, std::nan("")};
  try {
    fit_rate(nan);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
}

TEST_CASE("rates are scale invariant") {
  auto tr = ar1_tracks(5, 100, 0.8, 9);
  std::vector<double> b1, b2;
  for (int h = 1; h <= 30; ++h) b1.push_back(pooled_autocorr(tr, h));
  for (auto& t : tr)
    for (auto& v : t.values) v *= 37.5;
  for (int h = 1; h <= 30; ++h) b2.push_back(pooled_autocorr(tr, h));
  CHECK(fit_rate(b1) == doctest::Approx(fit_rate(b2)).epsilon(1e-12));
}

TEST_CASE("deviations from canonical dynamics") {
  const FlowField ff = linear_field({-0.9, 0.3});
  const std::vector<CountryScoreSeries> on{canonical_series({-0.9, 0.3}, 30, 0.0)};
  const DeviationSeries d = compute_deviations(ff, on);
  CHECK(d.structural.size() == 2);  // no s1 family
  for (double v : d.speed[0].values) CHECK(std::abs(v) < 1e-6);
  for (const auto& fam : d.structural)
    for (double v : fam[0].values) CHECK(std::abs(v) < 1e-6);

  const std::vector<CountryScoreSeries> off{canonical_series({-0.9, 0.3}, 30, 0.75)};
  const DeviationSeries e = compute_deviations(ff, off);
  for (double v : e.structural[0][0].values) CHECK(v == doctest::Approx(0.75));

  const RelaxationRates r = estimate_rates(d);
  CHECK(r.alpha_v_defaulted);
  CHECK(r.alpha_v == kDefaultAlpha);
  CHECK(r.alpha_s[0] == 0.0);
}

TEST_CASE("estimate_rates recovers a persistent structural rate") {
  const auto tracks = ar1_tracks(10, 200, 0.95, 21);
  DeviationSeries d;
  d.speed = ar1_tracks(10, 200, 0.0, 22);
  d.structural.push_back(tracks);
  const RelaxationRates r = estimate_rates(d);
  CHECK(r.alpha_s.size() == 2);
  CHECK(r.alpha_s[0] == 0.0);
  CHECK(std::abs(r.alpha_s[1] - 0.95) < 0.05);
  const auto hl = r.half_lives();
  CHECK(hl.size() == 2);
  CHECK(hl[1] == doctest::Approx(half_life(r.alpha_s[1])));
}
