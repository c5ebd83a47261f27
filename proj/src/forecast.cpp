#include "mortflow/forecast.hpp"

#include <cmath>

#include "mortflow/error.hpp"
#include "mortflow/life_table.hpp"

namespace mortflow {

double trailing_velocity(std::span<const int> years, std::span<const double> s1) {
  if (years.size() != s1.size()) fail(ErrorKind::ShapeMismatch, "year and s1 histories differ in length");
  if (years.size() < 2) fail(ErrorKind::InsufficientData, "need at least two points for a velocity");
  const std::size_t n = years.size();
  const std::size_t gaps = std::min(kTrailingVelocityWindow, n - 1);
  double sum = 0.0;
  for (std::size_t i = n - 1 - gaps; i + 1 < n; ++i) {
    const double gap = years[i + 1] - years[i];
    if (!(gap > 0.0)) fail(ErrorKind::DataError, "history years must be strictly increasing");
    sum += (s1[i + 1] - s1[i]) / gap;
  }
  return sum / static_cast<double>(gaps);
}

std::pair<double, double> step_speed(const FlowField& ff, const CountryState& state, double w, double alpha_v, int h,
                                     double s1_prev) {
  const double g = ff.speed(s1_prev);
  double v = g;
  if (w != 1.0) {
    const double m = (1.0 - w) * std::pow(alpha_v, h);
    v = (1.0 - m) * g + m * state.v_country;
  }
  return {v, s1_prev + v};
}

ScoreVector relax_scores(const FlowField& ff, const CountryState& state, const RelaxationRates& rates, int h,
                         double s1_h) {
  const Index N = state.scores.size();
  ScoreVector s(N);
  s(0) = s1_h;
  for (Index k = 1; k < N; ++k) {
    const double a = std::pow(rates.alpha_s.at(static_cast<std::size_t>(k)), h);
    s(k) = a * state.scores(k) + (1.0 - a) * ff.trajectory(k, s1_h);
  }
  return s;
}

double jumpoff_weight(int h, double tau_blend) { return std::exp2(-static_cast<double>(h) / tau_blend); }

Matrix reconstruct_with_jumpoff(const TuckerModel& model, const CorePCA& pca, const CountryState& state,
                                const ScoreVector& s, int h, double tau_blend) {
  Matrix m = reconstruct_schedule(model, inverse(pca, s));
  if (state.delta0.size() != 0) {
    if (state.delta0.rows() != m.rows() || state.delta0.cols() != m.cols()) {
      fail(ErrorKind::ShapeMismatch, "jump-off residual does not match the schedule shape");
    }
    m += jumpoff_weight(h, tau_blend) * state.delta0;
  }
  return m;
}

ForecastResult run_forecast(const TuckerModel& model, const CorePCA& pca, const FlowField& ff,
                            const CountryState& state, const ForecastConfig& config) {
  if (config.horizon < 1) fail(ErrorKind::ConfigError, "horizon must be at least 1");
  if (!(config.w >= 0.0 && config.w <= 1.0)) fail(ErrorKind::ConfigError, "blend weight w must lie in [0, 1]");
  if (state.scores.size() != pca.components() || ff.components() != pca.components()) {
    fail(ErrorKind::ShapeMismatch, "state, PCA and flow field disagree on the number of scores");
  }
  if (static_cast<Index>(config.rates.alpha_s.size()) != pca.components()) {
    fail(ErrorKind::ShapeMismatch, "relaxation rates do not match the number of scores");
  }
  if (!state.scores.allFinite() || !std::isfinite(state.v_country)) {
    fail(ErrorKind::DataError, "country state is not finite");
  }

  ForecastResult r;
  r.country = state.country;
  r.origin_year = state.origin_year;
  r.scores.resize(config.horizon, pca.components());
  double s1 = state.scores(0);
  for (int h = 1; h <= config.horizon; ++h) {
    s1 = step_speed(ff, state, config.w, config.rates.alpha_v, h, s1).second;
    const ScoreVector s = relax_scores(ff, state, config.rates, h, s1);
    r.scores.row(h - 1) = s.transpose();
    Matrix sched = reconstruct_with_jumpoff(model, pca, state, s, h, config.tau_blend);
    if (!sched.allFinite()) fail(ErrorKind::DomainError, "forecast schedule is not finite at h = " + std::to_string(h));
    const SexE0 e = schedule_e0(sched);
    r.e0_female.push_back(e.female);
    r.e0_male.push_back(e.male);
    r.e0_avg.push_back(e.average());
    r.schedules.push_back(std::move(sched));
  }
  return r;
}

CountryState tier1_state(const FlowField& ff, std::span<const E0Observation> e0_series, const std::string& country) {
  if (e0_series.size() < 2) fail(ErrorKind::InsufficientData, "Tier-1 entry needs at least two e0 observations");
  std::vector<int> years;
  std::vector<double> s1;
  for (const auto& o : e0_series) {
    if (!std::isfinite(o.e0)) fail(ErrorKind::DataError, "non-finite e0 in Tier-1 series");
    years.push_back(o.year);
    s1.push_back(ff.s1_of_e0(o.e0));
  }
  CountryState st;
  st.country = country;
  st.origin_year = years.back();
  st.v_country = trailing_velocity(years, s1);
  st.scores.resize(ff.components());
  st.scores(0) = s1.back();
  for (Index k = 1; k < ff.components(); ++k) st.scores(k) = ff.trajectory(k, s1.back());
  return st;
}

CountryState tier2_state(const TuckerModel& model, const CorePCA& pca, const FlowField& ff, const Matrix& z,
                         int origin_year, std::span<const std::pair<int, double>> s1_history,
                         const std::string& country) {
  const EffectiveCore g = project_schedule(model, z);
  CountryState st;
  st.country = country;
  st.origin_year = origin_year;
  st.scores = scores(pca, g);
  st.delta0 = z - reconstruct_schedule(model, inverse(pca, st.scores));
  if (s1_history.size() >= 2) {
    std::vector<int> years;
    std::vector<double> s1;
    for (const auto& [y, v] : s1_history) {
      years.push_back(y);
      s1.push_back(v);
    }
    st.v_country = trailing_velocity(years, s1);
  } else {
    st.v_country = ff.speed(st.scores(0));
  }
  return st;
}

ForecastResult apply_intervals(ForecastResult result, const std::optional<PICalibration>& calibration) {
  if (!calibration) fail(ErrorKind::CalibrationMissing, "model has no prediction-interval calibration");
  ForecastIntervals iv;
  for (int h = 1; h <= result.horizon(); ++h) {
    const double med = result.e0_avg[static_cast<std::size_t>(h - 1)] - calibration->bias(h);
    const double sd = calibration->kappa * calibration->sigma1 * std::sqrt(static_cast<double>(h));
    iv.median.push_back(med);
    iv.lo80.push_back(med - kZ80 * sd);
    iv.hi80.push_back(med + kZ80 * sd);
    iv.lo95.push_back(med - kZ95 * sd);
    iv.hi95.push_back(med + kZ95 * sd);
  }
  result.intervals = std::move(iv);
  return result;
}

}  // namespace mortflow
