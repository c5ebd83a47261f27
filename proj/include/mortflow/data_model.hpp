#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mortflow/tensor4.hpp"

namespace mortflow {

enum class Sex { Female = 0, Male = 1 };
inline constexpr int kSexes = 2;

/// qx is clamped into (kQxEpsilon, 1 - kQxEpsilon) before the logit.
inline constexpr double kQxEpsilon = 1e-7;

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Mid-interval conversion between central death rate and death probability.
inline double qx_from_mx(double mx) { return mx / (1.0 + 0.5 * mx); }
inline double mx_from_qx(double qx) { return qx / (1.0 - 0.5 * qx); }

inline double clamp_qx(double qx) {
  return std::min(std::max(qx, kQxEpsilon), 1.0 - kQxEpsilon);
}

/// One input row: either deaths/exposure or a direct rate.
struct RawRecord {
  std::string country;
  Sex sex = Sex::Female;
  int age = 0;
  int year = 0;
  double deaths = std::numeric_limits<double>::quiet_NaN();
  double exposure = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> mx;
};

struct YearBin {
  int first = 0;
  int last = 0;

  /// Year at which the pooled schedule is placed on the tensor's year axis.
  int representative_year() const { return first + (last - first) / 2; }
  bool contains(int year) const { return year >= first && year <= last; }
  friend bool operator==(const YearBin&, const YearBin&) = default;
};

using BinPlan = std::vector<YearBin>;

/// Single-age rates for one sex. Ages without data hold NaN.
struct SexSchedule {
  Vector mx;
  Vector qx;
  Vector logit_qx;

  bool complete() const { return logit_qx.size() > 0 && logit_qx.allFinite(); }
};

struct RateSchedule {
  std::string country;
  YearBin bin;
  std::array<std::optional<SexSchedule>, kSexes> sexes;

  int year() const { return bin.representative_year(); }
  Index ages() const;
  bool complete() const;
};

/// Sum deaths and exposures within each bin (or average direct rates),
/// convert to qx and logit(qx). Bins are applied to every country present.
std::vector<RateSchedule> pool_and_convert(std::span<const RawRecord> records, const BinPlan& plan,
                                           int ages);

/// Merge consecutive observed years of one country until each bin holds at
/// least `min_deaths` deaths (summed over sex and age). A trailing short bin
/// is merged into its predecessor. Rate-only data yields single-year bins.
BinPlan auto_bin_plan(std::span<const RawRecord> records, double min_deaths = 50.0);

/// Per-country auto_bin_plan followed by pool_and_convert.
std::vector<RateSchedule> pool_and_convert_auto(std::span<const RawRecord> records, int ages,
                                                double min_deaths = 50.0);

/// logit(qx) over sex x age x country x year with a country x year mask.
class MortalityTensor {
 public:
  using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

  MortalityTensor() = default;
  MortalityTensor(Tensor4 values, Mask mask, std::vector<std::string> countries,
                  std::vector<int> years);

  const Tensor4& values() const noexcept { return values_; }
  const Mask& mask() const noexcept { return mask_; }
  const std::vector<std::string>& countries() const noexcept { return countries_; }
  const std::vector<int>& years() const noexcept { return years_; }

  Index sexes() const { return values_.dim(0); }
  Index ages() const { return values_.dim(1); }
  Index num_countries() const { return values_.dim(2); }
  Index num_years() const { return values_.dim(3); }

  bool observed(Index c, Index t) const { return mask_(c, t); }
  Index observed_count() const { return mask_.count(); }

  /// S x A logit(qx) slice for one country-year.
  Matrix slice(Index c, Index t) const;

  std::optional<Index> country_index(const std::string& id) const;
  std::optional<Index> year_index(int year) const;

  /// Observed years of one country in ascending order.
  std::vector<int> observed_years(Index c) const;

  /// Sub-tensor keeping the listed countries and years <= max_year. The year
  /// grid is re-densified to the observed span of what remains.
  MortalityTensor restrict(std::span<const Index> keep_countries, int max_year) const;

 private:
  Tensor4 values_;
  Mask mask_;
  std::vector<std::string> countries_;
  std::vector<int> years_;
};

/// Countries are sorted by id; the year axis is the dense grid spanning all
/// schedules. A (c, t) cell is observed only when both sexes are complete.
MortalityTensor build_tensor(std::span<const RateSchedule> schedules);

}  // namespace mortflow
