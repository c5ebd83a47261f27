#include "mortflow/data_model.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "mortflow/error.hpp"

namespace mortflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CellAccumulator {
  double deaths = 0.0;
  double exposure = 0.0;
  double mx_sum = 0.0;
  int rate_rows = 0;
  int count_rows = 0;
};

void validate_plan(const BinPlan& plan) {
  if (plan.empty()) fail(ErrorKind::ConfigError, "bin plan is empty");
  BinPlan sorted = plan;
  std::sort(sorted.begin(), sorted.end(), [](const YearBin& a, const YearBin& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].last < sorted[i].first) fail(ErrorKind::ConfigError, "bin with last year before first year");
    if (i > 0 && sorted[i].first <= sorted[i - 1].last) fail(ErrorKind::ConfigError, "overlapping year bins");
  }
}

void validate_record(const RawRecord& r) {
  if (r.age < 0) fail(ErrorKind::DataError, "negative age for " + r.country);
  if (r.mx) {
    if (!std::isfinite(*r.mx) || *r.mx < 0.0) fail(ErrorKind::DataError, "mx must be finite and nonnegative");
  } else {
    if (!std::isfinite(r.deaths) || r.deaths < 0.0) fail(ErrorKind::DataError, "deaths must be finite and nonnegative");
    if (!std::isfinite(r.exposure) || r.exposure < 0.0) {
      fail(ErrorKind::DegenerateExposure, "exposure must be finite and positive for " + r.country);
    }
  }
}

SexSchedule empty_schedule(int ages) {
  return SexSchedule{Vector::Constant(ages, kNaN), Vector::Constant(ages, kNaN), Vector::Constant(ages, kNaN)};
}

}  // namespace

Index RateSchedule::ages() const {
  for (const auto& s : sexes) {
    if (s) return s->logit_qx.size();
  }
  return 0;
}

bool RateSchedule::complete() const {
  return std::all_of(sexes.begin(), sexes.end(), [](const auto& s) { return s && s->complete(); });
}

std::vector<RateSchedule> pool_and_convert(std::span<const RawRecord> records, const BinPlan& plan, int ages) {
  if (ages <= 0) fail(ErrorKind::ConfigError, "age grid must be non-empty");
  validate_plan(plan);

  // (country, bin, sex, age) -> accumulated totals
  std::map<std::tuple<std::string, std::size_t, int, int>, CellAccumulator> cells;
  std::set<std::tuple<std::string, int, int, int>> seen;
  std::set<std::string> countries;
  std::vector<bool> bin_used(plan.size(), false);

  for (const auto& r : records) {
    validate_record(r);
    if (!seen.emplace(r.country, static_cast<int>(r.sex), r.age, r.year).second) {
      fail(ErrorKind::DataError, "duplicate record for " + r.country + " year " + std::to_string(r.year) +
                                     " age " + std::to_string(r.age));
    }
    countries.insert(r.country);
    if (r.age >= ages) continue;
    const auto bin = std::find_if(plan.begin(), plan.end(), [&](const YearBin& b) { return b.contains(r.year); });
    if (bin == plan.end()) continue;
    const auto b = static_cast<std::size_t>(bin - plan.begin());
    bin_used[b] = true;
    auto& cell = cells[{r.country, b, static_cast<int>(r.sex), r.age}];
    if (r.mx) {
      cell.mx_sum += *r.mx;
      ++cell.rate_rows;
    } else {
      cell.deaths += r.deaths;
      cell.exposure += r.exposure;
      ++cell.count_rows;
    }
  }

  for (std::size_t b = 0; b < plan.size(); ++b) {
    if (!bin_used[b]) {
      fail(ErrorKind::MissingData, "no records in bin " + std::to_string(plan[b].first) + "-" +
                                       std::to_string(plan[b].last));
    }
  }

  std::map<std::pair<std::string, std::size_t>, RateSchedule> out;
  for (const auto& [key, cell] : cells) {
    const auto& [country, b, sex, age] = key;
    if (cell.rate_rows > 0 && cell.count_rows > 0) {
      fail(ErrorKind::DataError, "mixed rate and count records within one bin for " + country);
    }
    double mx = 0.0;
    if (cell.count_rows > 0) {
      if (cell.exposure <= 0.0) {
        fail(ErrorKind::DegenerateExposure, "zero total exposure for " + country + " age " + std::to_string(age));
      }
      mx = cell.deaths / cell.exposure;
    } else {
      mx = cell.mx_sum / cell.rate_rows;
    }
    auto& sched = out[{country, b}];
    sched.country = country;
    sched.bin = plan[b];
    auto& slot = sched.sexes[static_cast<std::size_t>(sex)];
    if (!slot) slot = empty_schedule(ages);
    const double qx = clamp_qx(qx_from_mx(mx));
    slot->mx[age] = mx;
    slot->qx[age] = qx;
    slot->logit_qx[age] = logit(qx);
  }

  std::vector<RateSchedule> result;
  result.reserve(out.size());
  for (auto& [key, sched] : out) result.push_back(std::move(sched));
  return result;
}

BinPlan auto_bin_plan(std::span<const RawRecord> records, double min_deaths) {
  std::map<int, double> deaths_by_year;
  bool rates_only = true;
  for (const auto& r : records) {
    deaths_by_year[r.year] += r.mx ? 0.0 : r.deaths;
    if (!r.mx) rates_only = false;
  }
  BinPlan plan;
  if (deaths_by_year.empty()) return plan;
  if (rates_only || min_deaths <= 0.0) {
    for (const auto& [year, d] : deaths_by_year) plan.push_back({year, year});
    return plan;
  }
  std::optional<YearBin> open;
  double acc = 0.0;
  for (const auto& [year, d] : deaths_by_year) {
    if (!open) open = YearBin{year, year};
    open->last = year;
    acc += d;
    if (acc >= min_deaths) {
      plan.push_back(*open);
      open.reset();
      acc = 0.0;
    }
  }
  if (open) {
    if (plan.empty()) {
      plan.push_back(*open);
    } else {
      plan.back().last = open->last;
    }
  }
  return plan;
}

std::vector<RateSchedule> pool_and_convert_auto(std::span<const RawRecord> records, int ages, double min_deaths) {
  std::map<std::string, std::vector<RawRecord>> by_country;
  for (const auto& r : records) by_country[r.country].push_back(r);
  std::vector<RateSchedule> out;
  for (const auto& [country, rows] : by_country) {
    const auto plan = auto_bin_plan(rows, min_deaths);
    auto pooled = pool_and_convert(rows, plan, ages);
    std::move(pooled.begin(), pooled.end(), std::back_inserter(out));
  }
  return out;
}

MortalityTensor::MortalityTensor(Tensor4 values, Mask mask, std::vector<std::string> countries,
                                 std::vector<int> years)
    : values_(std::move(values)), mask_(std::move(mask)), countries_(std::move(countries)), years_(std::move(years)) {
  if (mask_.rows() != values_.dim(2) || mask_.cols() != values_.dim(3) ||
      static_cast<Index>(countries_.size()) != values_.dim(2) || static_cast<Index>(years_.size()) != values_.dim(3)) {
    fail(ErrorKind::ShapeMismatch, "mortality tensor labels or mask do not match its shape");
  }
}

Matrix MortalityTensor::slice(Index c, Index t) const {
  if (c < 0 || c >= num_countries() || t < 0 || t >= num_years()) fail(ErrorKind::IndexError, "slice index out of range");
  Matrix out(sexes(), ages());
  for (Index s = 0; s < sexes(); ++s) {
    for (Index a = 0; a < ages(); ++a) out(s, a) = values_(s, a, c, t);
  }
  return out;
}

std::optional<Index> MortalityTensor::country_index(const std::string& id) const {
  const auto it = std::find(countries_.begin(), countries_.end(), id);
  if (it == countries_.end()) return std::nullopt;
  return static_cast<Index>(it - countries_.begin());
}

std::optional<Index> MortalityTensor::year_index(int year) const {
  if (years_.empty() || year < years_.front() || year > years_.back()) return std::nullopt;
  return static_cast<Index>(year - years_.front());
}

std::vector<int> MortalityTensor::observed_years(Index c) const {
  std::vector<int> out;
  for (Index t = 0; t < num_years(); ++t) {
    if (mask_(c, t)) out.push_back(years_[static_cast<std::size_t>(t)]);
  }
  return out;
}

MortalityTensor MortalityTensor::restrict(std::span<const Index> keep_countries, int max_year) const {
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (Index c : keep_countries) {
    for (int y : observed_years(c)) {
      if (y > max_year) continue;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (lo > hi) fail(ErrorKind::MissingData, "restriction leaves no observed country-years");

  const auto C = static_cast<Index>(keep_countries.size());
  const Index T = hi - lo + 1;
  Tensor4 values({sexes(), ages(), C, T}, kNaN);
  Mask mask = Mask::Constant(C, T, false);
  std::vector<std::string> ids;
  std::vector<int> years(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) years[static_cast<std::size_t>(t)] = lo + static_cast<int>(t);

  for (Index ci = 0; ci < C; ++ci) {
    const Index c = keep_countries[static_cast<std::size_t>(ci)];
    ids.push_back(countries_[static_cast<std::size_t>(c)]);
    for (Index t = 0; t < T; ++t) {
      const auto src = year_index(lo + static_cast<int>(t));
      if (!src || !mask_(c, *src)) continue;
      mask(ci, t) = true;
      for (Index s = 0; s < sexes(); ++s) {
        for (Index a = 0; a < ages(); ++a) values(s, a, ci, t) = values_(s, a, c, *src);
      }
    }
  }
  return MortalityTensor(std::move(values), std::move(mask), std::move(ids), std::move(years));
}

MortalityTensor build_tensor(std::span<const RateSchedule> schedules) {
  if (schedules.empty()) fail(ErrorKind::MissingData, "no schedules to assemble");
  const Index ages = schedules.front().ages();
  std::set<std::string> country_set;
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (const auto& s : schedules) {
    for (const auto& sex : s.sexes) {
      if (sex && sex->logit_qx.size() != ages) fail(ErrorKind::ShapeMismatch, "schedules use different age grids");
    }
    country_set.insert(s.country);
    lo = std::min(lo, s.year());
    hi = std::max(hi, s.year());
  }
  if (ages == 0) fail(ErrorKind::ShapeMismatch, "schedules carry no ages");

  std::vector<std::string> countries(country_set.begin(), country_set.end());
  const auto C = static_cast<Index>(countries.size());
  const Index T = hi - lo + 1;
  std::vector<int> years(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) years[static_cast<std::size_t>(t)] = lo + static_cast<int>(t);

  Tensor4 values({kSexes, ages, C, T}, kNaN);
  MortalityTensor::Mask mask = MortalityTensor::Mask::Constant(C, T, false);
  std::set<std::pair<std::string, int>> seen;
  for (const auto& s : schedules) {
    if (!seen.emplace(s.country, s.year()).second) {
      fail(ErrorKind::DataError, "two schedules for " + s.country + " year " + std::to_string(s.year()));
    }
    if (!s.complete()) continue;
    const auto c = static_cast<Index>(std::lower_bound(countries.begin(), countries.end(), s.country) - countries.begin());
    const Index t = s.year() - lo;
    mask(c, t) = true;
    for (int sex = 0; sex < kSexes; ++sex) {
      const auto& v = s.sexes[static_cast<std::size_t>(sex)]->logit_qx;
      for (Index a = 0; a < ages; ++a) values(sex, a, c, t) = v[a];
    }
  }
  return MortalityTensor(std::move(values), std::move(mask), std::move(countries), std::move(years));
}

}  // namespace mortflow
