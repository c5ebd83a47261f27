#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "mortflow/artifact.hpp"
#include "mortflow/data_io.hpp"
#include "mortflow/evaluation.hpp"
#include "mortflow/life_table.hpp"
#include "mortflow/pipeline.hpp"
#include "mortflow/synth.hpp"

namespace mortflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::ConfigError:
    case ErrorKind::RankError:
    case ErrorKind::CalibrationMissing:
    case ErrorKind::InsufficientData:
    case ErrorKind::IndexError:
      return 2;
    case ErrorKind::MissingData:
    case ErrorKind::DataError:
    case ErrorKind::DegenerateExposure:
    case ErrorKind::ShapeMismatch:
      return 3;
    case ErrorKind::EmptyEra:
    case ErrorKind::TailConfigError:
    case ErrorKind::DomainError:
      return 4;
  }
  return 4;
}

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) fail(ErrorKind::ConfigError, flag + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::ConfigError, flag + " is empty");
  return out;
}

Ranks parse_ranks(const std::string& text) {
  const auto v = parse_list<long>(text, "--ranks");
  if (v.size() != 4) fail(ErrorKind::ConfigError, "--ranks needs four comma-separated values");
  Ranks r;
  for (std::size_t i = 0; i < 4; ++i) r.r[i] = v[i];
  return r;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) fail(ErrorKind::ConfigError, "cannot write " + p.string());
  out << std::setprecision(10);
  return out;
}

struct FitOptions {
  std::string input;
  std::string ranks = "2,6,4,10";
  int pcs = 5;
  double tau = 12.0;
  double window = 40.0;
  double bandwidth = 0.20;
  std::optional<int> origin;
  std::uint64_t seed = 0;
  int ages = 110;
  double min_deaths = 50.0;

  void add(CLI::App* app) {
    app->add_option("--input", input, "Records CSV")->required();
    app->add_option("--ranks", ranks, "Tucker ranks sex,age,country,year");
    app->add_option("--pcs", pcs, "Number of principal components");
    app->add_option("--tau", tau, "Era half-life (years)");
    app->add_option("--window", window, "Era window W (years)");
    app->add_option("--bandwidth", bandwidth, "LOWESS bandwidth for flow functions");
    app->add_option("--seed", seed, "Seed for all randomness");
    app->add_option("--ages", ages, "Number of single ages kept (0..ages-1)");
    app->add_option("--min-deaths", min_deaths, "Minimum deaths per pooled year bin (count data)");
  }

  PipelineConfig pipeline() const {
    PipelineConfig pc;
    pc.ranks = parse_ranks(ranks);
    pc.components = pcs;
    pc.flow.tau = tau;
    pc.flow.window = window;
    pc.flow.bandwidth = bandwidth;
    pc.flow.seed = seed;
    return pc;
  }
};

MortalityTensor load_tensor(const std::string& path, int ages, double min_deaths) {
  if (ages < 1) fail(ErrorKind::ConfigError, "--ages must be positive");
  const auto records = read_records_csv(fs::path(path));
  const auto schedules = pool_and_convert_auto(records, ages, min_deaths);
  return build_tensor(schedules);
}

json fit_config_json(const FitOptions& o, int origin) {
  const Ranks r = parse_ranks(o.ranks);
  return {{"ranks", r.r},   {"pcs", o.pcs},   {"tau", o.tau},         {"window", o.window},
          {"bandwidth", o.bandwidth}, {"origin", origin}, {"seed", o.seed}, {"ages", o.ages},
          {"min_deaths", o.min_deaths}};
}

ModelArtifact make_artifact(const MortalityTensor& tensor, const FittedModel& fit, int origin, json config) {
  ModelArtifact a;
  a.tucker = fit.tucker;
  a.pca = fit.pca;
  a.flow = fit.flow;
  a.rates = fit.rates;
  a.meta.origin = origin;
  a.meta.countries = fit.tucker.countries;
  for (const auto& id : fit.tucker.countries) {
    std::vector<int> ys;
    for (int y : tensor.observed_years(*tensor.country_index(id))) {
      if (y <= origin) ys.push_back(y);
    }
    a.meta.observed_years[id] = ys;
  }
  a.meta.config = std::move(config);
  a.meta.config_hash = config_hash(a.meta.config);
  return a;
}

void print_fit_summary(const FittedModel& fit, std::ostream& out) {
  out << "component  explained_variance\n";
  for (Index k = 0; k < fit.pca.components(); ++k) {
    out << "PC" << (k + 1) << "        " << std::fixed << std::setprecision(6) << fit.pca.explained_variance(k) << "\n";
  }
  const auto hl = fit.rates.half_lives();
  out << "alpha_v " << fit.rates.alpha_v << (fit.rates.alpha_v_defaulted ? " (default)" : "") << " half-life " << hl[0]
      << "\n";
  for (std::size_t k = 1; k < fit.rates.alpha_s.size(); ++k) {
    out << "alpha_s[PC" << (k + 1) << "] " << fit.rates.alpha_s[k] << (fit.rates.alpha_s_defaulted[k] ? " (default)" : "")
        << " half-life " << hl[k] << "\n";
  }
  out << "s1* " << fit.flow.s1_star << "\n";
  for (const auto& s : fit.skipped) out << "skipped " << s << ": fewer than 5 observed years\n";
  out.unsetf(std::ios::floatfield);
}

int cmd_fit(const FitOptions& o, const std::string& output, std::ostream& out) {
  const MortalityTensor tensor = load_tensor(o.input, o.ages, o.min_deaths);
  const int origin = o.origin.value_or(tensor.years().back());
  const FittedModel fit = fit_pipeline(tensor, origin, o.pipeline());
  const ModelArtifact a = make_artifact(tensor, fit, origin, fit_config_json(o, origin));
  save_artifact(a, output);
  print_fit_summary(fit, out);
  out << "wrote " << output << "\n";
  return 0;
}

struct SynthOptions {
  SyntheticSpec spec;
  std::string output = "synthetic.csv";
  std::string truth;
  std::string alpha = "0.9";
  std::string lockstep;
};

int cmd_synth(SynthOptions o, std::ostream& out) {
  const auto k = static_cast<std::size_t>(std::max(0, o.spec.components - 1));
  auto alphas = parse_list<double>(o.alpha, "--alpha");
  if (alphas.size() == 1) alphas.assign(k, alphas.front());
  o.spec.alpha_struct = alphas;
  if (!o.lockstep.empty()) {
    o.spec.lockstep = parse_list<double>(o.lockstep, "--lockstep");
  } else {
    const std::vector<double> defaults{-0.3, 0.2, 0.1, -0.1};
    o.spec.lockstep.assign(defaults.begin(), defaults.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(k, 4)));
  }
  const SyntheticData d = generate_synthetic(o.spec);
  {
    std::ofstream f = open_out(o.output);
    write_records_csv(f, d.records);
  }
  const std::string truth = o.truth.empty() ? fs::path(o.output).replace_extension(".truth.json").string() : o.truth;
  {
    std::ofstream f = open_out(truth);
    f << truth_json(o.spec, d).dump(2) << "\n";
  }
  out << "wrote " << d.records.size() << " records for " << d.countries.size() << " countries to " << o.output
      << " (seed " << o.spec.seed << ")\n";
  out << "wrote ground truth to " << truth << "\n";
  return 0;
}

void write_cv_records(const fs::path& p, std::span<const CVRecord> records) {
  std::ofstream f = open_out(p);
  f << "country,origin,h,e0_hat,e0_obs,err\n";
  for (const auto& r : records) {
    f << r.country << ',' << r.origin << ',' << r.h << ',' << r.e0_hat << ',' << r.e0_obs << ',' << r.err << '\n';
  }
}

json summary_json(const LogMxSummary& s) {
  return {{"cells", s.cells}, {"mae", s.mae}, {"bias", s.bias}, {"mae_lx", s.mae_lx}, {"bias_lx", s.bias_lx}};
}

json report_json(const MetricReport& r) {
  json j;
  j["e0"] = {{"n", r.e0.n}, {"mae", r.e0.mae}, {"rmse", r.e0.rmse}, {"bias", r.e0.bias}};
  j["log_mx"] = summary_json(r.log_mx);
  j["sex_differential"] = summary_json(r.sex_differential);
  for (const auto& [k, v] : r.by_age_band) j["by_age_band"][k] = summary_json(v);
  for (const auto& [k, v] : r.by_horizon_band) j["by_horizon_band"][k] = summary_json(v);
  for (const auto& [k, v] : r.by_sex) j["by_sex"][k] = summary_json(v);
  j["excluded_cells"] = r.excluded_cells;
  return j;
}

struct CVOptions {
  FitOptions fit;
  double w = 1.0;
  int horizon = 50;
  std::string grid_w;
  std::string grid_tau;
  bool strict = false;
  unsigned jobs = 1;
  std::string model;
  std::string prefix = "cv";
  int min_train = 20;
  int spacing = 10;
};

int cmd_cv(const CVOptions& o, std::ostream& out, std::ostream& err) {
  const MortalityTensor tensor = load_tensor(o.fit.input, o.fit.ages, o.fit.min_deaths);
  CVConfig cfg;
  cfg.pipeline = o.fit.pipeline();
  cfg.w = o.w;
  cfg.horizon = o.horizon;
  cfg.min_train = o.min_train;
  cfg.origin_spacing = o.spacing;
  cfg.jobs = o.jobs;

  if (!o.grid_w.empty() || !o.grid_tau.empty()) {
    const auto ws = o.grid_w.empty() ? std::vector<double>{o.w} : parse_list<double>(o.grid_w, "--grid-w");
    const auto taus = o.grid_tau.empty() ? std::vector<double>{o.fit.tau} : parse_list<double>(o.grid_tau, "--grid-tau");
    CVConfig gcfg = cfg;
    gcfg.strict = o.strict;
    const GridResult g = grid_search(tensor, gcfg, ws, taus);
    std::ofstream f = open_out(o.prefix + "_grid.csv");
    f << "w,tau,n,mae,rmse,bias\n";
    for (const auto& r : g.rows) f << r.w << ',' << r.tau << ',' << r.e0.n << ',' << r.e0.mae << ',' << r.e0.rmse << ',' << r.e0.bias << '\n';
    const GridRow& best = g.rows[g.best];
    out << "grid (" << (o.strict ? "strict" : "inclusive") << "): " << g.rows.size() << " configurations, "
        << g.common_points << " common points; best w=" << best.w << " tau=" << best.tau << " MAE=" << best.e0.mae
        << "\n";
    cfg.w = best.w;
    cfg.pipeline.flow.tau = best.tau;
  }

  cfg.strict = true;
  cfg.keep_schedules = true;
  const CVResult res = run_loco_cv(tensor, cfg);
  for (const auto& line : res.log) err << "cv: " << line << "\n";
  if (res.records.empty()) fail(ErrorKind::InsufficientData, "cross-validation produced no test points");
  write_cv_records(o.prefix + "_records.csv", res.records);

  const MetricReport rep = metric_report(res.records);
  json metrics = report_json(rep);
  metrics["config"] = {{"w", cfg.w}, {"tau", cfg.pipeline.flow.tau}, {"seed", cfg.pipeline.flow.seed},
                       {"horizon", cfg.horizon}, {"fits", res.fits}};

  std::vector<std::string> warnings;
  std::optional<PICalibration> calib;
  try {
    calib = calibrate_pi(res.records, &warnings);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InsufficientData) throw;
    err << "cv: calibration skipped: " << e.what() << "\n";
  }
  for (const auto& w : warnings) err << "cv: " << w << "\n";
  if (calib) {
    metrics["calibration"] = {{"sigma1", calib->sigma1},
                              {"kappa", calib->kappa},
                              {"coverage80", empirical_coverage(res.records, *calib, kZ80)},
                              {"coverage95", empirical_coverage(res.records, *calib, kZ95)}};
  }
  {
    std::ofstream f = open_out(o.prefix + "_metrics.json");
    f << metrics.dump(2) << "\n";
  }
  out << "strict LOCO: " << res.records.size() << " test points from " << res.fits << " fits; e0 MAE " << rep.e0.mae
      << ", bias " << rep.e0.bias << "\n";
  if (!o.model.empty()) {
    if (!calib) fail(ErrorKind::CalibrationMissing, "no calibration could be fitted to append to " + o.model);
    ModelArtifact a = load_artifact(o.model);
    a.calibration = calib;
    save_artifact(a, o.model);
    out << "calibration (sigma1 " << calib->sigma1 << ", kappa " << calib->kappa << ") written to " << o.model << "\n";
  }
  return 0;
}

struct ForecastOptions {
  std::string model;
  std::string country;
  std::string tier1;
  std::string tier2;
  int horizon = 50;
  double w = 1.0;
  bool intervals = false;
  std::string prefix = "forecast";
  double min_deaths = 50.0;
};

CountryState tier2_from_file(const ModelArtifact& a, const std::string& path, double min_deaths) {
  const Index ages = a.tucker.age_factor().rows();
  const auto records = read_records_csv(fs::path(path));
  const MortalityTensor t = build_tensor(pool_and_convert_auto(records, static_cast<int>(ages), min_deaths));
  if (t.num_countries() != 1) fail(ErrorKind::DataError, "Tier-2 schedule file must hold exactly one country");
  if (t.ages() != ages || t.sexes() != a.tucker.sex_factor().rows()) {
    fail(ErrorKind::ShapeMismatch, "Tier-2 schedules do not match the model's sex and age grid");
  }
  std::vector<std::pair<int, double>> history;
  Index last = -1;
  for (Index y = 0; y < t.num_years(); ++y) {
    if (!t.observed(0, y)) continue;
    history.emplace_back(t.years()[static_cast<std::size_t>(y)], scores(a.pca, project_schedule(a.tucker, t.slice(0, y)))(0));
    last = y;
  }
  if (last < 0) fail(ErrorKind::MissingData, "Tier-2 file has no complete two-sex schedule");
  return tier2_state(a.tucker, a.pca, a.flow, t.slice(0, last), t.years()[static_cast<std::size_t>(last)], history,
                     t.countries().front());
}

int cmd_forecast(const ForecastOptions& o, std::ostream& out) {
  const ModelArtifact a = load_artifact(o.model);
  CountryState state;
  if (!o.country.empty()) {
    state = artifact_state(a, o.country);
  } else if (!o.tier1.empty()) {
    const auto obs = read_e0_csv(fs::path(o.tier1));
    state = tier1_state(a.flow, obs, fs::path(o.tier1).stem().string());
  } else {
    state = tier2_from_file(a, o.tier2, o.min_deaths);
  }
  ForecastConfig fc;
  fc.w = o.w;
  fc.horizon = o.horizon;
  fc.rates = a.rates;
  ForecastResult r = run_forecast(a.tucker, a.pca, a.flow, state, fc);
  if (o.intervals || a.calibration) r = apply_intervals(std::move(r), a.calibration);

  {
    std::ofstream f = open_out(o.prefix + "_schedules.csv");
    f << "country,horizon,year,sex,age,qx,logit_qx\n";
    for (int h = 1; h <= r.horizon(); ++h) {
      const Matrix& m = r.schedules[static_cast<std::size_t>(h - 1)];
      for (Index s = 0; s < m.rows(); ++s) {
        for (Index x = 0; x < m.cols(); ++x) {
          f << r.country << ',' << h << ',' << r.origin_year + h << ',' << sex_code(static_cast<Sex>(s)) << ',' << x
            << ',' << expit(m(s, x)) << ',' << m(s, x) << '\n';
        }
      }
    }
  }
  {
    std::ofstream f = open_out(o.prefix + "_summary.csv");
    f << "country,horizon,year,e0_f,e0_m,e0_avg,lo80,hi80,lo95,hi95\n";
    for (int h = 1; h <= r.horizon(); ++h) {
      const auto i = static_cast<std::size_t>(h - 1);
      f << r.country << ',' << h << ',' << r.origin_year + h << ',' << r.e0_female[i] << ',' << r.e0_male[i] << ','
        << r.e0_avg[i];
      if (r.intervals) {
        f << ',' << r.intervals->lo80[i] << ',' << r.intervals->hi80[i] << ',' << r.intervals->lo95[i] << ','
          << r.intervals->hi95[i];
      } else {
        f << ",,,,";
      }
      f << '\n';
    }
  }
  out << r.country << ": origin " << r.origin_year << ", e0 " << std::setprecision(4) << r.e0_avg.front() << " (h=1) -> "
      << r.e0_avg.back() << " (h=" << r.horizon() << ")\n";
  out << "wrote " << o.prefix << "_schedules.csv and " << o.prefix << "_summary.csv\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mortflow: flow-field mortality forecasting"};
  app.require_subcommand(1);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known dynamics");
  synth->add_option("--out", so.output, "Output records CSV");
  synth->add_option("--truth", so.truth, "Ground-truth JSON (default: <out>.truth.json)");
  synth->add_option("--countries", so.spec.countries);
  synth->add_option("--years", so.spec.years);
  synth->add_option("--first-year", so.spec.first_year);
  synth->add_option("--ages", so.spec.ages);
  synth->add_option("--pcs", so.spec.components, "Number of generating score components");
  synth->add_option("--alpha", so.alpha, "AR(1) coefficient(s) of structural deviations");
  synth->add_option("--lockstep", so.lockstep, "Trajectory coefficients c_k for k = 2..N");
  synth->add_option("--speed-intercept", so.spec.speed_intercept);
  synth->add_option("--speed-slope", so.spec.speed_slope);
  synth->add_option("--speed-noise", so.spec.speed_noise);
  synth->add_option("--struct-sigma", so.spec.struct_sigma);
  synth->add_option("--obs-noise", so.spec.obs_noise);
  synth->add_option("--seed", so.spec.seed);

  FitOptions fo;
  std::string fit_output = "model.json";
  std::optional<int> fit_origin;
  auto* fit = app.add_subcommand("fit", "Fit Tucker, PCA, flow field and relaxation rates");
  fo.add(fit);
  fit->add_option("--origin", fit_origin, "Forecast origin year (default: last year)");
  fit->add_option("--output", fit_output, "Model artifact path");

  CVOptions co;
  auto* cv = app.add_subcommand("cv", "Leave-country-out cross-validation, grid search and PI calibration");
  co.fit.add(cv);
  cv->add_option("--w", co.w, "Speed blend weight");
  cv->add_option("--horizon", co.horizon);
  cv->add_option("--grid-w", co.grid_w, "Comma-separated w grid");
  cv->add_option("--grid-tau", co.grid_tau, "Comma-separated tau grid");
  cv->add_flag("--strict-loco", co.strict, "Held-out-free refits in the grid stage");
  cv->add_option("--jobs", co.jobs, "Parallel held-out countries (capped by MORTFLOW_THREADS)");
  cv->add_option("--model", co.model, "Artifact that receives the calibration block");
  cv->add_option("--out-prefix", co.prefix);
  cv->add_option("--min-train", co.min_train);
  cv->add_option("--origin-spacing", co.spacing);

  ForecastOptions fc;
  auto* forecast = app.add_subcommand("forecast", "Forecast a training country or an external population");
  forecast->add_option("--model", fc.model)->required();
  auto* g1 = forecast->add_option("--country", fc.country, "Training country id");
  auto* g2 = forecast->add_option("--tier1-e0", fc.tier1, "CSV of year,e0");
  auto* g3 = forecast->add_option("--tier2-schedule", fc.tier2, "Records CSV for one country");
  g1->excludes(g2)->excludes(g3);
  g2->excludes(g3);
  forecast->add_option("--horizon", fc.horizon);
  forecast->add_option("--w", fc.w);
  forecast->add_flag("--intervals", fc.intervals, "Require calibrated prediction intervals");
  forecast->add_option("--out-prefix", fc.prefix);
  forecast->add_option("--min-deaths", fc.min_deaths);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) return cmd_synth(so, out);
    if (*fit) {
      fo.origin = fit_origin;
      return cmd_fit(fo, fit_output, out);
    }
    if (*cv) return cmd_cv(co, out, err);
    if (*forecast) {
      if (fc.country.empty() && fc.tier1.empty() && fc.tier2.empty()) {
        fail(ErrorKind::ConfigError, "one of --country, --tier1-e0 or --tier2-schedule is required");
      }
      if (fc.horizon < 1) fail(ErrorKind::ConfigError, "--horizon must be at least 1");
      return cmd_forecast(fc, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace mortflow::cli
