#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>

#include "mortflow/error.hpp"
#include "mortflow/evaluation.hpp"
#include "mortflow/synth.hpp"

using namespace mortflow;

namespace {

std::vector<CVRecord> gaussian_records(std::size_t n, int max_h, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> z;
  std::vector<CVRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    CVRecord r;
    r.country = "X";
    r.h = 1 + static_cast<int>(i % static_cast<std::size_t>(max_h));
    r.err = std::sqrt(static_cast<double>(r.h)) * z(rng);
    out.push_back(r);
  }
  return out;
}

MortalityTensor synthetic_tensor(int countries, int years, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.countries = countries;
  spec.years = years;
  spec.seed = seed;
  const SyntheticData d = generate_synthetic(spec);
  return build_tensor(pool_and_convert_auto(d.records, spec.ages));
}

}  // namespace

TEST_CASE("origins every 10 observations from the 20th") {
  std::vector<int> years;
  for (int y = 1950; y < 1995; ++y) years.push_back(y);
  CHECK(cv_origins(years, 20, 10) == std::vector<int>{1969, 1979, 1989});
  std::vector<int> gappy{1, 3, 5, 7, 9};
  CHECK(cv_origins(gappy, 2, 2) == std::vector<int>{3, 7});
  CHECK(cv_origins(gappy, 20, 10).empty());
}

TEST_CASE("thread cap from the environment") {
  setenv("MORTFLOW_THREADS", "2", 1);
  CHECK(effective_jobs(8) == 2);
  CHECK(effective_jobs(1) == 1);
  unsetenv("MORTFLOW_THREADS");
  CHECK(effective_jobs(8) == 8);
  CHECK(effective_jobs(0) == 1);
}

TEST_CASE("calibration on Gaussian sqrt(h) errors") {
  const auto recs = gaussian_records(10000, 5, 1);
  const PICalibration c = calibrate_pi(recs);
  for (int h = 1; h <= 5; ++h) CHECK(std::abs(c.bias(h)) < 0.1);
  CHECK(std::abs(c.sigma1 - 1.0) < 0.1);
  CHECK(std::abs(c.kappa - 1.0) < 0.1);
  CHECK(std::abs(empirical_coverage(recs, c, kZ95) - 0.95) < 0.02);
}

TEST_CASE("calibration edge cases") {
  std::vector<CVRecord> constant;
  for (int i = 0; i < 40; ++i) {
    CVRecord r;
    r.h = 1 + i % 2;
    r.err = 1.5;
    constant.push_back(r);
  }
  std::vector<std::string> warnings;
  const PICalibration c = calibrate_pi(constant, &warnings);
  CHECK(c.bias(1) == doctest::Approx(1.5));
  CHECK(c.sigma1 == kSigmaFloor);
  CHECK_FALSE(warnings.empty());

  const auto few = gaussian_records(15, 1, 2);
  try {
    calibrate_pi(few);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
}

TEST_CASE("lx-weighted metrics") {
  const std::vector<double> eps{0.3, -0.6};
  const std::vector<double> lx{1.0, 0.5};
  CHECK(lx_weighted_mae(eps, lx) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(lx_weighted_bias(eps, lx) == doctest::Approx(0.0).epsilon(1e-15));
  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> e(50), u(50, 0.37);
  double mae = 0;
  for (auto& v : e) {
    v = n(rng);
    mae += std::abs(v) / 50;
  }
  CHECK(lx_weighted_mae(e, u) == doctest::Approx(mae).epsilon(1e-12));
  std::vector<double> e2 = e;
  for (auto& v : e2) v *= 3.0;
  CHECK(lx_weighted_bias(e2, u) == doctest::Approx(3.0 * lx_weighted_bias(e, u)).epsilon(1e-12));
}

TEST_CASE("band labels") {
  CHECK(age_band(0) == "0");
  CHECK(age_band(14) == "1-14");
  CHECK(age_band(15) == "15-29");
  CHECK(age_band(44) == "30-44");
  CHECK(age_band(89) == "75-89");
  CHECK(age_band(100) == "90-100");
  CHECK(age_band(105).empty());
  CHECK(horizon_band(5) == "1-5");
  CHECK(horizon_band(6) == "6-15");
  CHECK(horizon_band(25) == "16-25");
  CHECK(horizon_band(50) == "26-50");
  CHECK(horizon_band(51).empty());
}

TEST_CASE("metric report: perfect forecasts, order invariance, exclusions") {
  std::vector<CVRecord> recs;
  std::mt19937 rng(4);
  std::normal_distribution<double> n;
  for (int i = 0; i < 6; ++i) {
    CVRecord r;
    r.country = "X";
    r.h = 1 + i * 5;
    r.e0_hat = r.e0_obs = 70.0 + i;
    r.log_mx_obs = Matrix(2, 20);
    for (Index k = 0; k < r.log_mx_obs.size(); ++k) r.log_mx_obs.data()[k] = -6.0 + 0.2 * (k % 20) + 0.1 * n(rng);
    r.log_mx_hat = r.log_mx_obs;
    recs.push_back(r);
  }
  const MetricReport perfect = metric_report(recs);
  CHECK(perfect.e0.mae == 0.0);
  CHECK(perfect.e0.bias == 0.0);
  CHECK(perfect.log_mx.mae == 0.0);
  CHECK(perfect.log_mx.mae_lx == 0.0);
  CHECK(perfect.sex_differential.mae_lx == 0.0);
  CHECK(perfect.log_mx.cells == 6 * 40);

  for (auto& r : recs) {
    r.log_mx_hat.array() += 0.1 * n(rng);
    r.e0_hat += n(rng);
    r.err = r.e0_hat - r.e0_obs;
  }
  recs[0].log_mx_obs(0, 3) = -std::numeric_limits<double>::infinity();
  const MetricReport a = metric_report(recs);
  std::reverse(recs.begin(), recs.end());
  const MetricReport b = metric_report(recs);
  CHECK(a.e0.mae == doctest::Approx(b.e0.mae).epsilon(1e-14));
  CHECK(a.log_mx.mae_lx == doctest::Approx(b.log_mx.mae_lx).epsilon(1e-14));
  CHECK(a.excluded_cells == 1);
  CHECK(a.by_horizon_band.at("1-5").cells == 39);
  CHECK(a.by_sex.size() == 2);
  CHECK(a.by_age_band.count("0") == 1);
}

TEST_CASE("leave-country-out CV on synthetic countries") {
  const MortalityTensor t = synthetic_tensor(3, 60, 5);
  CVConfig cfg;
  cfg.pipeline.ranks = Ranks{{2, 8, 100, 1000}};
  cfg.pipeline.components = 3;
  cfg.horizon = 20;
  cfg.keep_schedules = true;
  const CVResult r = run_loco_cv(t, cfg);
  CHECK(r.fits == 15);
  std::set<std::string> held;
  for (const auto& rec : r.records) held.insert(rec.country);
  CHECK(held.size() == 3);
  CHECK(std::is_sorted(r.records.begin(), r.records.end(), [](const CVRecord& x, const CVRecord& y) {
    return std::tie(x.country, x.origin, x.h) < std::tie(y.country, y.origin, y.h);
  }));
  const ErrorSummary s = summarize_errors(r.records);
  MESSAGE("3-country LOCO MAE " << s.mae << " bias " << s.bias << " over " << s.n << " points");
  CHECK(s.mae < 0.5);

  CVConfig par = cfg;
  par.jobs = 3;
  const CVResult p = run_loco_cv(t, par);
  REQUIRE(p.records.size() == r.records.size());
  for (std::size_t i = 0; i < p.records.size(); ++i) CHECK(p.records[i].err == r.records[i].err);

  const MetricReport rep = metric_report(r.records);
  CHECK(rep.log_mx.cells > 0);
}

TEST_CASE("held-out data never reaches the training fit") {
  const MortalityTensor t = synthetic_tensor(3, 40, 6);
  PipelineConfig pc;
  pc.ranks = Ranks{{2, 8, 100, 1000}};
  pc.components = 3;
  pc.clip_ranks = true;
  const std::vector<Index> keep{0, 2};
  const FittedModel fit = fit_pipeline(t, 1930, pc, keep);
  CHECK_FALSE(fit.provenance.contains(lineage_tag(t.countries()[1])));
  CHECK(fit.provenance.contains(lineage_tag(t.countries()[0])));
  CHECK(fit.tucker.countries.size() == 2);
}

TEST_CASE("grid search scores the common test points") {
  const MortalityTensor t = synthetic_tensor(3, 50, 7);
  CVConfig cfg;
  cfg.pipeline.ranks = Ranks{{2, 8, 100, 1000}};
  cfg.pipeline.components = 3;
  cfg.horizon = 10;
  cfg.strict = false;
  const std::vector<double> ws{0.5, 1.0};
  const std::vector<double> taus{10.0, 30.0};
  const GridResult g = grid_search(t, cfg, ws, taus);
  CHECK(g.rows.size() == 4);
  CHECK(g.common_points > 0);
  for (const auto& row : g.rows) CHECK(row.e0.n == g.common_points);
  for (const auto& row : g.rows) CHECK(g.rows[g.best].e0.mae <= row.e0.mae);
}
