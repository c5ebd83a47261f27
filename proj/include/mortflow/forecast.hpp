#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mortflow/convergence.hpp"
#include "mortflow/core_pca.hpp"
#include "mortflow/data_io.hpp"
#include "mortflow/flowfield.hpp"
#include "mortflow/smoothing.hpp"
#include "mortflow/tucker.hpp"

namespace mortflow {

inline constexpr std::size_t kTrailingVelocityWindow = 5;

struct CountryState {
  std::string country;
  ScoreVector scores;       // s_actual at the origin, length N
  double v_country = 0.0;   // trailing s1 velocity
  Matrix delta0;            // S x A jump-off residual; empty means zero
  int origin_year = 0;
};

struct ForecastConfig {
  double w = 1.0;
  int horizon = 50;
  double tau_blend = 2.0;
  RelaxationRates rates;
};

/// Prediction-interval calibration (fitted by the evaluation module).
struct PICalibration {
  SmoothFn bias;        // b(h)
  double sigma1 = 1.0;
  double kappa = 1.0;

  friend bool operator==(const PICalibration&, const PICalibration&) = default;
};

struct ForecastIntervals {
  std::vector<double> median, lo80, hi80, lo95, hi95;
};

struct ForecastResult {
  std::string country;
  int origin_year = 0;
  Matrix scores;                // H x N, row h-1
  std::vector<Matrix> schedules; // logit(qx), S x A per horizon
  std::vector<double> e0_female, e0_male, e0_avg;
  std::optional<ForecastIntervals> intervals;

  int horizon() const { return static_cast<int>(schedules.size()); }
};

inline constexpr double kZ80 = 1.2816;
inline constexpr double kZ95 = 1.96;

/// Mean of the last min(5, n - 1) forward differences (divided by year gaps).
double trailing_velocity(std::span<const int> years, std::span<const double> s1);

/// v = [1 - (1 - w) a^h] g*(s1_prev) + (1 - w) a^h v_country; returns (v, s1_prev + v).
std::pair<double, double> step_speed(const FlowField& ff, const CountryState& state, double w, double alpha_v, int h,
                                     double s1_prev);

/// Full score vector at horizon h: s1_h in component 0, then
/// s_k = a_k^h s_k_actual + (1 - a_k^h) f_k*(s1_h).
ScoreVector relax_scores(const FlowField& ff, const CountryState& state, const RelaxationRates& rates, int h,
                         double s1_h);

/// 2^(-h / tau_blend).
double jumpoff_weight(int h, double tau_blend);

/// S reshape(g_bar + s V) A^T + 2^(-h / tau_blend) delta0.
Matrix reconstruct_with_jumpoff(const TuckerModel& model, const CorePCA& pca, const CountryState& state,
                                const ScoreVector& s, int h, double tau_blend);

ForecastResult run_forecast(const TuckerModel& model, const CorePCA& pca, const FlowField& ff,
                            const CountryState& state, const ForecastConfig& config);

/// State from an e0 series alone: s1 via s1_of_e0, structural scores on the
/// canonical trajectories, zero jump-off. Needs at least two observations.
CountryState tier1_state(const FlowField& ff, std::span<const E0Observation> e0_series,
                         const std::string& country = "tier1");

/// State from an observed S x A logit(qx) schedule projected onto the basis.
/// Velocity from the s1 history (year, s1) when it has two or more points,
/// otherwise the canonical speed at s1.
CountryState tier2_state(const TuckerModel& model, const CorePCA& pca, const FlowField& ff, const Matrix& z,
                         int origin_year, std::span<const std::pair<int, double>> s1_history = {},
                         const std::string& country = "tier2");

/// median = e0 - b(h); bands at e0 - b(h) +- z kappa sigma1 sqrt(h).
ForecastResult apply_intervals(ForecastResult result, const std::optional<PICalibration>& calibration);

}  // namespace mortflow
