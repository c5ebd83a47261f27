#include "mortflow/synth.hpp"

#include <cmath>
#include <cstdio>

#include "mortflow/error.hpp"
#include "mortflow/smoothing.hpp"

namespace mortflow {

void validate(const SyntheticSpec& spec) {
  if (spec.countries < 1 || spec.years < 2 || spec.ages < 5) {
    fail(ErrorKind::ConfigError, "synthetic spec needs >= 1 country, >= 2 years and >= 5 ages");
  }
  if (spec.components < 1 || spec.components > 5) fail(ErrorKind::ConfigError, "synthetic components must be 1..5");
  const auto k = static_cast<std::size_t>(spec.components - 1);
  if (spec.lockstep.size() != k || spec.alpha_struct.size() != k) {
    fail(ErrorKind::ConfigError, "lockstep and alpha_struct need one entry per structural score");
  }
  for (double a : spec.alpha_struct) {
    if (!(a >= 0.0 && a < 1.0)) fail(ErrorKind::ConfigError, "alpha_struct must lie in [0, 1)");
  }
  if (spec.speed_noise < 0.0 || spec.struct_sigma < 0.0 || spec.obs_noise < 0.0) {
    fail(ErrorKind::ConfigError, "noise scales must be non-negative");
  }
}

namespace {

Matrix mean_schedule(int ages) {
  Matrix mu(kSexes, ages);
  for (int s = 0; s < kSexes; ++s) {
    const double mult = s == 0 ? 1.0 : 1.35;
    for (int a = 0; a < ages; ++a) {
      double mx = 0.0004 + 0.00004 * std::exp(0.095 * a);
      if (a == 0) mx += 0.01;
      if (a >= 1 && a <= 4) mx += 0.001 * std::exp(-static_cast<double>(a));
      mu(s, a) = logit(clamp_qx(qx_from_mx(mult * mx)));
    }
  }
  return mu;
}

// Level shift, young/old contrast, sex gap, mid-age hump, old-age curvature;
// orthonormalized in order.
std::vector<Matrix> patterns(int ages, int n) {
  std::vector<Matrix> raw;
  const double A = ages - 1;
  Matrix b(kSexes, ages);
  b.setOnes();
  raw.push_back(b);
  for (int a = 0; a < ages; ++a) b.col(a).setConstant(a / A - 0.5);
  raw.push_back(b);
  for (int a = 0; a < ages; ++a) {
    b(0, a) = -1.0;
    b(1, a) = 1.0;
  }
  raw.push_back(b);
  for (int a = 0; a < ages; ++a) b.col(a).setConstant(std::exp(-std::pow((a - 25.0) / 8.0, 2)));
  raw.push_back(b);
  for (int a = 0; a < ages; ++a) b.col(a).setConstant(std::pow(a / A - 0.5, 2));
  raw.push_back(b);

  std::vector<Matrix> out;
  for (int k = 0; k < n; ++k) {
    Matrix v = raw[static_cast<std::size_t>(k)];
    for (const auto& u : out) v -= (v.cwiseProduct(u).sum()) * u;
    out.push_back(v / v.norm());
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticData d;
  const int N = spec.components;
  d.mean_schedule = mean_schedule(spec.ages);
  d.patterns = patterns(spec.ages, N);
  for (int y = 0; y < spec.years; ++y) d.years.push_back(spec.first_year + y);

  for (int c = 0; c < spec.countries; ++c) {
    char id[16];
    std::snprintf(id, sizeof id, "SYN%02d", c + 1);
    d.countries.emplace_back(id);
    CounterRng rng(spec.seed, static_cast<std::uint64_t>(c) + 1);

    Matrix sc(spec.years, N);
    Matrix dev(spec.years, N - 1);
    double s1 = spec.s1_start_min + (spec.s1_start_max - spec.s1_start_min) * rng.uniform();
    std::vector<double> ar(static_cast<std::size_t>(N - 1));
    for (int k = 0; k + 1 < N; ++k) {
      const double a = spec.alpha_struct[static_cast<std::size_t>(k)];
      ar[static_cast<std::size_t>(k)] = spec.struct_sigma / std::sqrt(1.0 - a * a) * rng.normal();
    }
    for (int t = 0; t < spec.years; ++t) {
      if (t > 0) {
        s1 += spec.speed_intercept + spec.speed_slope * s1 + spec.speed_noise * rng.normal();
        for (int k = 0; k + 1 < N; ++k) {
          auto& x = ar[static_cast<std::size_t>(k)];
          x = spec.alpha_struct[static_cast<std::size_t>(k)] * x + spec.struct_sigma * rng.normal();
        }
      }
      sc(t, 0) = s1;
      for (int k = 1; k < N; ++k) {
        const double x = ar[static_cast<std::size_t>(k - 1)];
        dev(t, k - 1) = x;
        sc(t, k) = spec.lockstep[static_cast<std::size_t>(k - 1)] * s1 + x;
      }

      Matrix z = d.mean_schedule;
      for (int k = 0; k < N; ++k) z += sc(t, k) * d.patterns[static_cast<std::size_t>(k)];
      for (int s = 0; s < kSexes; ++s) {
        for (int a = 0; a < spec.ages; ++a) {
          const double q = clamp_qx(expit(z(s, a) + spec.obs_noise * rng.normal()));
          RawRecord r;
          r.country = id;
          r.sex = s == 0 ? Sex::Female : Sex::Male;
          r.age = a;
          r.year = spec.first_year + t;
          r.mx = mx_from_qx(q);
          d.records.push_back(std::move(r));
        }
      }
    }
    d.scores.push_back(std::move(sc));
    d.deviations.push_back(std::move(dev));
  }
  return d;
}

nlohmann::json truth_json(const SyntheticSpec& spec, const SyntheticData& data) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["countries"] = data.countries;
  j["first_year"] = spec.first_year;
  j["years"] = spec.years;
  j["ages"] = spec.ages;
  j["components"] = spec.components;
  j["speed"] = {{"intercept", spec.speed_intercept}, {"slope", spec.speed_slope}, {"noise", spec.speed_noise}};
  j["lockstep"] = spec.lockstep;
  j["alpha_struct"] = spec.alpha_struct;
  j["struct_sigma"] = spec.struct_sigma;
  j["obs_noise"] = spec.obs_noise;
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t c = 0; c < data.countries.size(); ++c) {
    const Matrix& m = data.scores[c];
    nlohmann::json rows = nlohmann::json::array();
    for (Index t = 0; t < m.rows(); ++t) {
      std::vector<double> row;
      for (Index k = 0; k < m.cols(); ++k) row.push_back(m(t, k));
      rows.push_back(row);
    }
    scores[data.countries[c]] = rows;
  }
  j["scores"] = scores;
  return j;
}

}  // namespace mortflow
