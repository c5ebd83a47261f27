#include "mortflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "mortflow/error.hpp"
#include "mortflow/life_table.hpp"

namespace mortflow {

unsigned effective_jobs(unsigned requested) {
  unsigned jobs = std::max(1u, requested);
  if (const char* env = std::getenv("MORTFLOW_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) jobs = std::min(jobs, static_cast<unsigned>(cap));
  }
  return jobs;
}

std::vector<int> cv_origins(std::span<const int> observed_years, int min_train, int spacing) {
  std::vector<int> out;
  if (min_train < 1 || spacing < 1) fail(ErrorKind::ConfigError, "min_train and origin spacing must be positive");
  for (std::size_t k = static_cast<std::size_t>(min_train); k <= observed_years.size();
       k += static_cast<std::size_t>(spacing)) {
    out.push_back(observed_years[k - 1]);
  }
  return out;
}

namespace {

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex m;
  std::size_t next = 0;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(m);
          if (error || next >= n) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

bool recoverable(ErrorKind k) {
  return k == ErrorKind::InsufficientData || k == ErrorKind::EmptyEra || k == ErrorKind::TailConfigError ||
         k == ErrorKind::MissingData;
}

Matrix log_mx(const Matrix& logit_qx) {
  return logit_qx.unaryExpr([](double v) { return std::log(mx_from_qx(expit(v))); });
}

struct Task {
  Index country;
  int origin;
};

struct TaskOutput {
  std::vector<std::vector<CVRecord>> per_w;
  std::string log;
  std::size_t fits = 0;
};

// One CV pass per blend weight; fits do not depend on w and are shared.
std::vector<CVResult> cv_core(const MortalityTensor& tensor, const CVConfig& config, std::span<const double> ws) {
  if (tensor.num_countries() < 2) fail(ErrorKind::InsufficientData, "cross-validation needs at least two countries");
  if (config.horizon < 1) fail(ErrorKind::ConfigError, "horizon must be at least 1");

  PipelineConfig pc = config.pipeline;
  pc.clip_ranks = true;

  std::vector<CVResult> results(ws.size());
  std::vector<Task> tasks;
  std::vector<std::string> head_log;
  for (Index c = 0; c < tensor.num_countries(); ++c) {
    const auto years = tensor.observed_years(c);
    const auto origins = cv_origins(years, config.min_train, config.origin_spacing);
    if (origins.empty()) {
      head_log.push_back("skipped " + tensor.countries()[static_cast<std::size_t>(c)] + ": fewer than " +
                         std::to_string(config.min_train) + " observed years");
    }
    for (int o : origins) tasks.push_back({c, o});
  }

  std::optional<TuckerModel> truth_model;
  if (config.tucker_truth) truth_model = hosvd(tensor, clip_ranks(pc.ranks, tensor.values().dims()));

  // Inclusive mode: a single fit per origin year on every country.
  std::map<int, std::optional<FittedModel>> inclusive;
  std::map<int, std::string> inclusive_error;
  const unsigned jobs = effective_jobs(config.jobs);
  if (!config.strict) {
    std::vector<int> origins;
    for (const auto& t : tasks) origins.push_back(t.origin);
    std::sort(origins.begin(), origins.end());
    origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
    std::vector<std::optional<FittedModel>> fits(origins.size());
    std::vector<std::string> errors(origins.size());
    parallel_for(origins.size(), jobs, [&](std::size_t i) {
      try {
        fits[i] = fit_pipeline(tensor, origins[i], pc);
      } catch (const Error& e) {
        if (!recoverable(e.kind())) throw;
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < origins.size(); ++i) {
      inclusive[origins[i]] = std::move(fits[i]);
      inclusive_error[origins[i]] = errors[i];
    }
  }

  std::vector<TaskOutput> outputs(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& task = tasks[i];
    const std::string& id = tensor.countries()[static_cast<std::size_t>(task.country)];
    TaskOutput& out = outputs[i];
    out.per_w.resize(ws.size());

    std::optional<FittedModel> local;
    const FittedModel* fit = nullptr;
    try {
      if (config.strict) {
        std::vector<Index> keep;
        for (Index c = 0; c < tensor.num_countries(); ++c) {
          if (c != task.country) keep.push_back(c);
        }
        local = fit_pipeline(tensor, task.origin, pc, keep);
        out.fits = 1;
        if (local->provenance.contains(lineage_tag(id))) {
          fail(ErrorKind::DataError, "held-out country " + id + " leaked into its training fit");
        }
        fit = &*local;
      } else {
        const auto& cached = inclusive.at(task.origin);
        if (!cached) fail(ErrorKind::InsufficientData, inclusive_error.at(task.origin));
        fit = &*cached;
      }
    } catch (const Error& e) {
      if (!recoverable(e.kind())) throw;
      out.log = id + " origin " + std::to_string(task.origin) + ": " + e.what();
      return;
    }

    const CountryState state = projected_state(*fit, tensor, task.country, task.origin);
    for (std::size_t wi = 0; wi < ws.size(); ++wi) {
      ForecastConfig fc;
      fc.w = ws[wi];
      fc.horizon = config.horizon;
      fc.rates = fit->rates;
      const ForecastResult r = run_forecast(fit->tucker, fit->pca, fit->flow, state, fc);
      for (int h = 1; h <= r.horizon(); ++h) {
        const auto t = tensor.year_index(state.origin_year + h);
        if (!t || !tensor.observed(task.country, *t)) continue;
        const Matrix obs = truth_model ? reconstruct_schedule(*truth_model, effective_core(*truth_model, task.country, *t))
                                       : tensor.slice(task.country, *t);
        CVRecord rec;
        rec.country = id;
        rec.origin = task.origin;
        rec.h = h;
        rec.e0_hat = r.e0_avg[static_cast<std::size_t>(h - 1)];
        rec.e0_obs = schedule_e0(obs).average();
        rec.err = rec.e0_hat - rec.e0_obs;
        if (config.keep_schedules) {
          rec.log_mx_hat = log_mx(r.schedules[static_cast<std::size_t>(h - 1)]);
          rec.log_mx_obs = log_mx(obs);
        }
        out.per_w[wi].push_back(std::move(rec));
      }
    }
  });

  for (std::size_t wi = 0; wi < ws.size(); ++wi) {
    CVResult& res = results[wi];
    res.log = head_log;
    for (auto& out : outputs) {
      if (!out.log.empty() && wi == 0) res.log.push_back(out.log);
      res.fits += out.fits;
      for (auto& rec : out.per_w.empty() ? std::vector<CVRecord>{} : out.per_w[wi]) res.records.push_back(rec);
    }
    if (wi != 0) res.log = results[0].log;
    std::sort(res.records.begin(), res.records.end(), [](const CVRecord& a, const CVRecord& b) {
      return std::tie(a.country, a.origin, a.h) < std::tie(b.country, b.origin, b.h);
    });
  }
  if (!config.strict) {
    for (auto& res : results) res.fits = inclusive.size();
  }
  return results;
}

}  // namespace

CVResult run_loco_cv(const MortalityTensor& tensor, const CVConfig& config) {
  const double w = config.w;
  return std::move(cv_core(tensor, config, std::span<const double>(&w, 1)).front());
}

ErrorSummary summarize_errors(std::span<const CVRecord> records) {
  ErrorSummary s;
  s.n = records.size();
  if (s.n == 0) return s;
  double abs = 0.0, sq = 0.0, sum = 0.0;
  for (const auto& r : records) {
    abs += std::abs(r.err);
    sq += r.err * r.err;
    sum += r.err;
  }
  const double n = static_cast<double>(s.n);
  s.mae = abs / n;
  s.rmse = std::sqrt(sq / n);
  s.bias = sum / n;
  return s;
}

GridResult grid_search(const MortalityTensor& tensor, const CVConfig& base, std::span<const double> ws,
                       std::span<const double> taus) {
  if (ws.empty() || taus.empty()) fail(ErrorKind::ConfigError, "grid must contain at least one w and one tau");
  GridResult g;
  for (double tau : taus) {
    CVConfig cfg = base;
    cfg.pipeline.flow.tau = tau;
    auto per_w = cv_core(tensor, cfg, ws);
    for (std::size_t wi = 0; wi < ws.size(); ++wi) {
      g.rows.push_back({ws[wi], tau, {}});
      g.records.push_back(std::move(per_w[wi].records));
    }
  }

  using Key = std::tuple<std::string, int, int>;
  std::set<Key> common;
  for (std::size_t i = 0; i < g.records.size(); ++i) {
    std::set<Key> keys;
    for (const auto& r : g.records[i]) keys.emplace(r.country, r.origin, r.h);
    if (i == 0) {
      common = std::move(keys);
    } else {
      std::set<Key> both;
      std::set_intersection(common.begin(), common.end(), keys.begin(), keys.end(), std::inserter(both, both.end()));
      common = std::move(both);
    }
  }
  g.common_points = common.size();
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    std::vector<CVRecord> kept;
    for (const auto& r : g.records[i]) {
      if (common.contains(Key{r.country, r.origin, r.h})) kept.push_back(r);
    }
    g.rows[i].e0 = summarize_errors(kept);
    if (g.rows[i].e0.mae < g.rows[g.best].e0.mae) g.best = i;
  }
  return g;
}

namespace {

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PICalibration calibrate_pi(std::span<const CVRecord> records, std::vector<std::string>* warnings) {
  std::map<int, std::vector<double>> by_h;
  for (const auto& r : records) {
    if (r.h < 1 || !std::isfinite(r.err)) fail(ErrorKind::DataError, "calibration records need h >= 1 and finite errors");
    by_h[r.h].push_back(r.err);
  }
  std::size_t usable = 0;
  for (const auto& [h, e] : by_h) usable += e.size() >= kMinRecordsPerHorizon ? 1 : 0;
  if (usable < 2) fail(ErrorKind::InsufficientData, "calibration needs two horizons with at least ten records each");

  std::vector<double> hx, ey;
  for (const auto& r : records) {
    hx.push_back(r.h);
    ey.push_back(r.err);
  }
  PICalibration c;
  c.bias = lowess(hx, ey, kCalibrationBandwidth);

  std::vector<double> ratios;
  for (const auto& [h, e] : by_h) {
    if (e.size() < kMinRecordsPerHorizon) continue;
    std::vector<double> d;
    for (double x : e) d.push_back(x - c.bias(h));
    ratios.push_back(sample_sd(d) / std::sqrt(static_cast<double>(h)));
  }
  c.sigma1 = median(ratios);
  if (!(c.sigma1 >= kSigmaFloor)) {
    c.sigma1 = kSigmaFloor;
    if (warnings) warnings->push_back("sigma1 degenerate; floored at 1e-6");
  }

  std::vector<double> z;
  for (const auto& r : records) z.push_back((r.err - c.bias(r.h)) / (c.sigma1 * std::sqrt(static_cast<double>(r.h))));
  c.kappa = sample_sd(z);
  if (!(c.kappa >= kSigmaFloor)) {
    c.kappa = kSigmaFloor;
    if (warnings) warnings->push_back("kappa degenerate; floored at 1e-6");
  }
  return c;
}

double empirical_coverage(std::span<const CVRecord> records, const PICalibration& calib, double z) {
  if (records.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& r : records) {
    const double half = z * calib.kappa * calib.sigma1 * std::sqrt(static_cast<double>(r.h));
    if (std::abs(r.err - calib.bias(r.h)) <= half) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(records.size());
}

double lx_weighted_mae(std::span<const double> eps, std::span<const double> lx) {
  if (eps.size() != lx.size()) fail(ErrorKind::ShapeMismatch, "errors and weights differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    num += lx[i] * std::abs(eps[i]);
    den += lx[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

double lx_weighted_bias(std::span<const double> eps, std::span<const double> lx) {
  if (eps.size() != lx.size()) fail(ErrorKind::ShapeMismatch, "errors and weights differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    num += lx[i] * eps[i];
    den += lx[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

std::string age_band(Index age) {
  if (age == 0) return "0";
  if (age >= 1 && age <= 14) return "1-14";
  if (age >= 15 && age <= 89) {
    const Index lo = 15 + (age - 15) / 15 * 15;
    return std::to_string(lo) + "-" + std::to_string(lo + 14);
  }
  if (age >= 90 && age <= 100) return "90-100";
  return "";
}

std::string horizon_band(int h) {
  if (h >= 1 && h <= 5) return "1-5";
  if (h >= 6 && h <= 15) return "6-15";
  if (h >= 16 && h <= 25) return "16-25";
  if (h >= 26 && h <= 50) return "26-50";
  return "";
}

namespace {

struct Acc {
  std::size_t n = 0;
  double abs = 0.0, sum = 0.0, wabs = 0.0, wsum = 0.0, w = 0.0;

  void add(double e, double lx) {
    ++n;
    abs += std::abs(e);
    sum += e;
    wabs += lx * std::abs(e);
    wsum += lx * e;
    w += lx;
  }
  LogMxSummary summary() const {
    LogMxSummary s;
    s.cells = n;
    if (n == 0) return s;
    s.mae = abs / static_cast<double>(n);
    s.bias = sum / static_cast<double>(n);
    s.mae_lx = w > 0.0 ? wabs / w : 0.0;
    s.bias_lx = w > 0.0 ? wsum / w : 0.0;
    return s;
  }
};

}  // namespace

MetricReport metric_report(std::span<const CVRecord> records) {
  MetricReport rep;
  rep.e0 = summarize_errors(records);
  Acc all, diff;
  std::map<std::string, Acc> ages, horizons, sexes;
  for (const auto& r : records) {
    if (r.log_mx_hat.size() == 0 || r.log_mx_obs.size() == 0) continue;
    if (r.log_mx_hat.rows() != r.log_mx_obs.rows() || r.log_mx_hat.cols() != r.log_mx_obs.cols()) {
      fail(ErrorKind::ShapeMismatch, "forecast and observed schedules are not aligned");
    }
    const Index S = r.log_mx_obs.rows(), A = r.log_mx_obs.cols();
    Matrix lx(S, A);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> ok(S, A);
    for (Index s = 0; s < S; ++s) {
      Vector qx(A);
      for (Index a = 0; a < A; ++a) {
        const double lm = r.log_mx_obs(s, a);
        ok(s, a) = std::isfinite(lm) && std::isfinite(r.log_mx_hat(s, a));
        qx(a) = ok(s, a) ? std::min(1.0, qx_from_mx(std::exp(lm))) : 0.0;
      }
      lx.row(s) = survivorship(qx).transpose();
    }
    const std::string hb = horizon_band(r.h);
    for (Index s = 0; s < S; ++s) {
      const std::string sex = s == 0 ? "female" : s == 1 ? "male" : "sex" + std::to_string(s);
      for (Index a = 0; a < A; ++a) {
        if (!ok(s, a)) {
          ++rep.excluded_cells;
          continue;
        }
        const double e = r.log_mx_hat(s, a) - r.log_mx_obs(s, a);
        all.add(e, lx(s, a));
        sexes[sex].add(e, lx(s, a));
        const std::string ab = age_band(a);
        if (!ab.empty()) ages[ab].add(e, lx(s, a));
        if (!hb.empty()) horizons[hb].add(e, lx(s, a));
      }
    }
    if (S == 2) {
      for (Index a = 0; a < A; ++a) {
        if (!ok(0, a) || !ok(1, a)) continue;
        const double e = (r.log_mx_hat(1, a) - r.log_mx_hat(0, a)) - (r.log_mx_obs(1, a) - r.log_mx_obs(0, a));
        diff.add(e, 0.5 * (lx(0, a) + lx(1, a)));
      }
    }
  }
  rep.log_mx = all.summary();
  rep.sex_differential = diff.summary();
  for (const auto& [k, v] : ages) rep.by_age_band[k] = v.summary();
  for (const auto& [k, v] : horizons) rep.by_horizon_band[k] = v.summary();
  for (const auto& [k, v] : sexes) rep.by_sex[k] = v.summary();
  return rep;
}

}  // namespace mortflow
