#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mortflow/error.hpp"
#include "mortflow/smoothing.hpp"

using namespace mortflow;

namespace {

// Textbook unweighted local-linear LOWESS at x0: the ceil(f n) nearest points
// (plus ties) with tricube weights, fitted by weighted least squares.
double brute_lowess(const std::vector<double>& x, const std::vector<double>& y, double f, double x0) {
  const std::size_t n = x.size();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(x[i] - x0);
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  const auto q = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
  const double h = sorted[q - 1];
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] >= h) continue;
    const double u = dist[i] / h;
    const double w = std::pow(1 - u * u * u, 3);
    s0 += w;
    s1 += w * x[i];
    s2 += w * x[i] * x[i];
    t0 += w * y[i];
    t1 += w * x[i] * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  const double b = (s0 * t1 - s1 * t0) / det;
  const double a = (t0 - b * s1) / s0;
  return a + b * x0;
}

}  // namespace

TEST_CASE("SmoothFn interpolates linearly and is flat outside the knots") {
  const SmoothFn f({0.0, 1.0, 3.0}, {0.0, 2.0, 0.0});
  CHECK(f(0.5) == doctest::Approx(1.0));
  CHECK(f(2.0) == doctest::Approx(1.0));
  CHECK(f(-5.0) == 0.0);
  CHECK(f(10.0) == 0.0);
  CHECK_THROWS_AS(SmoothFn({0.0, 0.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(SmoothFn({0.0, 1.0}, {1.0}), Error);
}

TEST_CASE("LOWESS reproduces a straight line exactly") {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(0.37 * i * i / 40.0);
    y.push_back(2.0 - 0.7 * x.back());
  }
  const SmoothFn f = lowess(x, y, 0.2);
  for (double v : {0.0, 1.3, 5.5, 14.0}) CHECK(f(v) == doctest::Approx(2.0 - 0.7 * v).epsilon(1e-10));
}

TEST_CASE("LOWESS agrees with a brute-force local-linear smoother") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 0; i < 60; ++i) {
    x.push_back(u(rng));
    y.push_back(std::sin(x.back()) + n(rng));
  }
  for (double f : {0.2, 0.3, 0.75}) {
    const SmoothFn s = lowess(x, y, f);
    for (double xi : x) CHECK(s(xi) == doctest::Approx(brute_lowess(x, y, f, xi)).epsilon(1e-9));
  }
}

TEST_CASE("LOWESS with near-zero weights outside a subset equals the subset fit") {
  std::mt19937 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x, y, w, xs, ys;
  for (int i = 0; i < 80; ++i) {
    x.push_back(i * 0.1);
    y.push_back(std::cos(x.back()) + 0.2 * n(rng));
    const bool in = i % 3 == 0;
    w.push_back(in ? 1.0 : 1e-12);
    if (in) {
      xs.push_back(x.back());
      ys.push_back(y.back());
    }
  }
  const SmoothFn weighted = lowess(x, y, 0.3, std::span<const double>(w));
  const SmoothFn subset = lowess(xs, ys, 0.3);
  for (double v : xs) CHECK(weighted(v) == doctest::Approx(subset(v)).epsilon(1e-6));
}

TEST_CASE("LOWESS input validation and knot cap") {
  std::vector<double> x{1, 2, 3, 4}, y{1, 2, 3, 4};
  CHECK_THROWS_AS(lowess(x, y, 0.5), Error);
  x.push_back(5);
  y.push_back(5);
  CHECK_THROWS_AS(lowess(x, y, 0.0), Error);
  CHECK_THROWS_AS(lowess(x, y, 1.5), Error);

  std::vector<double> bx(5000), by(5000);
  for (std::size_t i = 0; i < bx.size(); ++i) {
    bx[i] = static_cast<double>(i) / 7.0;
    by[i] = 0.5 * bx[i];
  }
  const SmoothFn big = lowess(bx, by, 0.1);
  CHECK(big.knots().size() <= kMaxKnots);
  CHECK(big.min_x() == bx.front());
  CHECK(big.max_x() == bx.back());
}

TEST_CASE("era kernel point values") {
  const EraKernel k{2000, 12.0, 40.0};
  CHECK(era_weight(2000, k) == 1.0);
  CHECK(era_weight(1988, k) == 0.5);
  CHECK(era_weight(1976, k) == 0.25);
  CHECK(era_weight(1960, k) == doctest::Approx(std::pow(0.5, 40.0 / 12.0)));
  CHECK(era_weight(1959, k) == 0.0);
  CHECK(era_weight(2001, k) == 0.0);
}

TEST_CASE("era LOWESS: deterministic per seed, EmptyEra outside the window") {
  std::vector<double> x, y;
  std::vector<int> years;
  for (int i = 0; i < 60; ++i) {
    x.push_back(i * 0.5);
    y.push_back(1.0 + 0.1 * x.back());
    years.push_back(1950 + i);
  }
  const EraKernel k{2000, 12.0, 40.0};
  const SmoothFn a = era_lowess(x, y, years, k, 0.3, 20000, 7);
  const SmoothFn b = era_lowess(x, y, years, k, 0.3, 20000, 7);
  CHECK(a == b);
  // Only points from 1960..2000 can be drawn.
  CHECK(a.min_x() >= 5.0);
  CHECK(a.max_x() <= 25.0);
  CHECK(a(15.0) == doctest::Approx(2.5).epsilon(1e-9));
  try {
    era_lowess(x, y, years, EraKernel{1900, 12.0, 40.0}, 0.3, 20000, 7);
    FAIL("expected EmptyEra");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyEra);
  }
}

TEST_CASE("era bootstrap draws are proportional to the weights") {
  // Two strata with weights 1 and 0.5: expected share of draws 2/3 vs 1/3.
  std::vector<double> x, y;
  std::vector<int> years;
  for (int i = 0; i < 1000; ++i) {
    const bool recent = i % 2 == 0;
    years.push_back(recent ? 2000 : 1988);
    x.push_back(i);
    y.push_back(recent ? 1.0 : 0.0);
  }
  // Bandwidth 1 and a constant-in-x response: the fit is close to the draw mean.
  const SmoothFn f = era_lowess(x, y, years, EraKernel{2000, 12.0, 40.0}, 1.0, 20000, 3);
  CHECK(std::abs(f(500.0) - 2.0 / 3.0) < 0.05);
}

TEST_CASE("counter RNG") {
  CounterRng a(5), b(5), c(5, 1);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(CounterRng(5).next_u64() != c.next_u64());
  CounterRng r(9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.01);
}

TEST_CASE("smoothstep") {
  CHECK(smoothstep(0.0) == 0.0);
  CHECK(smoothstep(1.0) == 1.0);
  CHECK(smoothstep(0.5) == 0.5);
}
