#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mortflow/data_model.hpp"
#include "mortflow/forecast.hpp"
#include "mortflow/pipeline.hpp"

namespace mortflow {

struct CVConfig {
  PipelineConfig pipeline;
  double w = 1.0;
  int horizon = 50;
  int origin_spacing = 10;
  int min_train = 20;
  bool strict = true;          // refit without the held-out country; otherwise one inclusive fit per origin
  unsigned jobs = 1;
  bool tucker_truth = false;   // ground truth e0 from the Tucker reconstruction instead of the input schedule
  bool keep_schedules = false; // store log mx matrices for metric_report
};

struct CVRecord {
  std::string country;
  int origin = 0;
  int h = 0;
  double e0_hat = 0.0;
  double e0_obs = 0.0;
  double err = 0.0;
  Matrix log_mx_hat;  // S x A, present when schedules are kept
  Matrix log_mx_obs;
};

struct CVResult {
  std::vector<CVRecord> records;  // sorted by (country, origin, h)
  std::vector<std::string> log;   // skipped countries and failed origins
  std::size_t fits = 0;
};

/// Worker count: `requested` capped by MORTFLOW_THREADS when set, at least 1.
unsigned effective_jobs(unsigned requested);

/// Origins at the 20th, 30th, ... observed year of a country (1-based count).
std::vector<int> cv_origins(std::span<const int> observed_years, int min_train, int spacing);

/// Leave-country-out cross-validation. Each held-out country is forecast from
/// a Tier-2 state projected through a basis fitted without it (strict) and
/// compared with its observed e0 at every horizon that has data.
CVResult run_loco_cv(const MortalityTensor& tensor, const CVConfig& config);

struct ErrorSummary {
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double bias = 0.0;
};

ErrorSummary summarize_errors(std::span<const CVRecord> records);

struct GridRow {
  double w = 0.0;
  double tau = 0.0;
  ErrorSummary e0;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::size_t best = 0;
  std::size_t common_points = 0;
  std::vector<std::vector<CVRecord>> records;  // per row
};

/// Cross-validates every (w, tau) pair and scores each on the test points
/// common to all configurations; best is the lowest pooled e0 MAE.
GridResult grid_search(const MortalityTensor& tensor, const CVConfig& base, std::span<const double> ws,
                       std::span<const double> taus);

inline constexpr double kCalibrationBandwidth = 0.30;
inline constexpr double kSigmaFloor = 1e-6;
inline constexpr std::size_t kMinRecordsPerHorizon = 10;

/// b(h) by LOWESS of error on h; sigma1 = median over h of SD(error - b)/sqrt(h);
/// kappa = SD of (error - b(h)) / (sigma1 sqrt(h)). Degenerate spreads are
/// floored at 1e-6 and reported through `warnings`.
PICalibration calibrate_pi(std::span<const CVRecord> records, std::vector<std::string>* warnings = nullptr);

/// Fraction of records whose observed e0 falls inside the calibrated band.
double empirical_coverage(std::span<const CVRecord> records, const PICalibration& calib, double z);

/// sum lx |eps| / sum lx and sum lx eps / sum lx.
double lx_weighted_mae(std::span<const double> eps, std::span<const double> lx);
double lx_weighted_bias(std::span<const double> eps, std::span<const double> lx);

struct LogMxSummary {
  std::size_t cells = 0;
  double mae = 0.0;
  double bias = 0.0;
  double mae_lx = 0.0;
  double bias_lx = 0.0;
};

struct MetricReport {
  ErrorSummary e0;
  LogMxSummary log_mx;
  LogMxSummary sex_differential;
  std::map<std::string, LogMxSummary> by_age_band;
  std::map<std::string, LogMxSummary> by_horizon_band;
  std::map<std::string, LogMxSummary> by_sex;
  std::size_t excluded_cells = 0;
};

/// Band label of an age ("0", "1-14", ..., "90-100") and of a horizon
/// ("1-5", "6-15", "16-25", "26-50"); empty when outside every band.
std::string age_band(Index age);
std::string horizon_band(int h);

/// e0 error summary plus log-mx errors eps = log m_hat - log m_obs with lx
/// from the observed life table of each sex. The sex differential
/// log m_M - log m_F is weighted by the mean of the two sexes' lx. Cells with
/// a non-positive or non-finite observed rate are excluded and counted.
MetricReport metric_report(std::span<const CVRecord> records);

}  // namespace mortflow
