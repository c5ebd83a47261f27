#include "mortflow/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mortflow/error.hpp"

namespace mortflow {

namespace {

double tricube(double u) {
  const double v = 1.0 - u * u * u;
  return v * v * v;
}

struct SortedData {
  std::vector<double> x, y, w;
  double total_weight = 0.0;
};

SortedData sort_data(std::span<const double> x, std::span<const double> y, std::optional<std::span<const double>> w) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  SortedData d;
  d.x.reserve(x.size());
  d.y.reserve(x.size());
  d.w.reserve(x.size());
  for (std::size_t i : order) {
    d.x.push_back(x[i]);
    d.y.push_back(y[i]);
    d.w.push_back(w ? (*w)[i] : 1.0);
    d.total_weight += d.w.back();
  }
  return d;
}

std::vector<double> fit_knots(const std::vector<double>& sorted_x) {
  std::vector<double> uniq;
  std::unique_copy(sorted_x.begin(), sorted_x.end(), std::back_inserter(uniq));
  if (uniq.size() <= kMaxKnots) return uniq;
  std::vector<double> knots;
  knots.reserve(kMaxKnots);
  const auto n = sorted_x.size();
  for (std::size_t i = 0; i < kMaxKnots; ++i) {
    const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                                                           static_cast<double>(kMaxKnots - 1)));
    if (knots.empty() || sorted_x[pos] > knots.back()) knots.push_back(sorted_x[pos]);
  }
  return knots;
}

double local_linear(const SortedData& d, double x0, double target_mass) {
  const auto n = static_cast<std::ptrdiff_t>(d.x.size());
  std::ptrdiff_t right = std::lower_bound(d.x.begin(), d.x.end(), x0) - d.x.begin();
  std::ptrdiff_t left = right - 1;
  double mass = 0.0;
  double h = 0.0;
  const double goal = target_mass * (1.0 - 1e-12);
  while (mass < goal && (left >= 0 || right < n)) {
    const bool take_right = left < 0 || (right < n && d.x[right] - x0 <= x0 - d.x[left]);
    if (take_right) {
      h = d.x[right] - x0;
      mass += d.w[right++];
    } else {
      h = x0 - d.x[left];
      mass += d.w[left--];
    }
  }
  while (left >= 0 && x0 - d.x[left] <= h) --left;
  while (right < n && d.x[right] - x0 <= h) ++right;

  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::ptrdiff_t i = left + 1; i < right; ++i) {
    const double dist = std::abs(d.x[i] - x0);
    const double k = h > 0.0 ? (dist < h ? tricube(dist / h) : 0.0) : (dist == 0.0 ? 1.0 : 0.0);
    const double wi = k * d.w[i];
    sw += wi;
    sx += wi * d.x[i];
    sy += wi * d.y[i];
  }
  if (sw <= 0.0) {
    // Every positive-weight neighbour sits on the boundary; fall back to the prior-weighted mean.
    double pw = 0.0, py = 0.0;
    for (std::ptrdiff_t i = left + 1; i < right; ++i) {
      pw += d.w[i];
      py += d.w[i] * d.y[i];
    }
    return pw > 0.0 ? py / pw : std::numeric_limits<double>::quiet_NaN();
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::ptrdiff_t i = left + 1; i < right; ++i) {
    const double dist = std::abs(d.x[i] - x0);
    const double k = h > 0.0 ? (dist < h ? tricube(dist / h) : 0.0) : (dist == 0.0 ? 1.0 : 0.0);
    const double wi = k * d.w[i];
    sxx += wi * (d.x[i] - mx) * (d.x[i] - mx);
    sxy += wi * (d.x[i] - mx) * (d.y[i] - my);
  }
  const double span = d.x.back() - d.x.front();
  if (sxx <= 1e-12 * sw * span * span) return my;
  return my + sxy / sxx * (x0 - mx);
}

}  // namespace

SmoothFn::SmoothFn(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  if (knots_.size() != values_.size()) fail(ErrorKind::ShapeMismatch, "knots and values differ in length");
  if (knots_.empty()) fail(ErrorKind::InsufficientData, "smooth function needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i]) || !std::isfinite(values_[i])) fail(ErrorKind::DataError, "non-finite knot or value");
    if (i > 0 && !(knots_[i] > knots_[i - 1])) fail(ErrorKind::DataError, "knots must be strictly increasing");
  }
}

double SmoothFn::operator()(double x) const {
  if (x <= knots_.front()) return values_.front();
  if (x >= knots_.back()) return values_.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - knots_[lo]) / (knots_[hi] - knots_[lo]);
  return values_[lo] + t * (values_[hi] - values_[lo]);
}

SmoothFn lowess(std::span<const double> x, std::span<const double> y, double bandwidth,
                std::optional<std::span<const double>> weights) {
  if (x.size() != y.size()) fail(ErrorKind::ShapeMismatch, "lowess: x and y differ in length");
  if (weights && weights->size() != x.size()) fail(ErrorKind::ShapeMismatch, "lowess: weights differ in length");
  if (x.size() < 5) fail(ErrorKind::InsufficientData, "lowess needs at least 5 points");
  if (!(bandwidth > 0.0 && bandwidth <= 1.0)) fail(ErrorKind::ConfigError, "lowess bandwidth must lie in (0, 1]");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) fail(ErrorKind::DataError, "lowess: non-finite input");
    if (weights && !((*weights)[i] >= 0.0 && std::isfinite((*weights)[i]))) {
      fail(ErrorKind::DataError, "lowess: weights must be finite and nonnegative");
    }
  }
  const SortedData d = sort_data(x, y, weights);
  if (!(d.total_weight > 0.0)) fail(ErrorKind::DataError, "lowess: all weights are zero");

  std::vector<double> knots = fit_knots(d.x);
  std::vector<double> values;
  values.reserve(knots.size());
  const double target = bandwidth * d.total_weight;
  for (double k : knots) values.push_back(local_linear(d, k, target));

  // Knots whose entire neighbourhood carries zero prior weight cannot be fitted.
  std::vector<double> kk, vv;
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (std::isfinite(values[i])) {
      kk.push_back(knots[i]);
      vv.push_back(values[i]);
    }
  }
  return SmoothFn(std::move(kk), std::move(vv));
}

double era_weight(int year, const EraKernel& kernel) {
  const double age = static_cast<double>(kernel.origin - year);
  if (age < 0.0 || age > kernel.window) return 0.0;
  return std::exp2(-age / kernel.tau);
}

std::vector<double> era_weights(std::span<const int> years, const EraKernel& kernel) {
  std::vector<double> out;
  out.reserve(years.size());
  for (int y : years) out.push_back(era_weight(y, kernel));
  return out;
}

SmoothFn era_lowess(std::span<const double> x, std::span<const double> y, std::span<const int> years,
                    const EraKernel& kernel, double bandwidth, std::size_t n_max, std::uint64_t seed) {
  if (x.size() != y.size() || x.size() != years.size()) fail(ErrorKind::ShapeMismatch, "era_lowess: inputs differ in length");
  if (!(kernel.tau > 0.0) || !(kernel.window > 0.0)) fail(ErrorKind::ConfigError, "era kernel needs tau > 0 and W > 0");
  const auto w = era_weights(years, kernel);
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  if (cdf.empty() || !(cdf.back() > 0.0)) fail(ErrorKind::EmptyEra, "no observations inside the era window");

  const std::size_t draws = std::min(3 * x.size(), n_max);
  std::vector<double> rx(draws), ry(draws);
  CounterRng rng(seed);
  const double total = cdf.back();
  for (std::size_t i = 0; i < draws; ++i) {
    const double u = rng.uniform() * total;
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, cdf.size() - 1);
    while (w[idx] <= 0.0 && idx + 1 < cdf.size()) ++idx;
    rx[i] = x[idx];
    ry[i] = y[idx];
  }
  return lowess(rx, ry, bandwidth);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(seed ^ (stream * 0xD1B54A32D192ED03ULL)) {}

std::uint64_t CounterRng::next_u64() noexcept {
  std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double CounterRng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace mortflow
