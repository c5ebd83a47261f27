#include <doctest.h>

#include <cmath>
#include <random>

#include "mortflow/error.hpp"
#include "mortflow/forecast.hpp"
#include "mortflow/life_table.hpp"

using namespace mortflow;

namespace {

struct Toy {
  TuckerModel model;
  CorePCA pca;
};

Toy toy() {
  std::mt19937 rng(1);
  std::normal_distribution<double> n;
  Tensor4 t({2, 6, 3, 8});
  for (auto& v : t.data()) v = -4.0 + 0.5 * n(rng);
  Toy out;
  out.model = hosvd(t, Ranks{{2, 3, 3, 8}});
  Matrix data(20, 6);
  for (Index i = 0; i < data.size(); ++i) data.data()[i] = n(rng);
  out.pca = fit_pca(data, 2, 3, 3);
  return out;
}

FlowField field(double speed, std::vector<double> levels) {
  FlowField ff;
  const std::vector<double> x{-50.0, 50.0};
  ff.speed = ExtendedFn(SmoothFn(x, {speed, speed}));
  for (double c : levels) ff.trajectories.emplace_back(SmoothFn(x, {c, c}));
  ff.s1_of_e0 = ExtendedFn(SmoothFn({0.0, 100.0}, {50.0, -50.0}));
  ff.e0_of_s1 = ExtendedFn(SmoothFn({-50.0, 50.0}, {100.0, 0.0}));
  return ff;
}

RelaxationRates rates(double av, std::vector<double> as) {
  RelaxationRates r;
  r.alpha_v = av;
  r.alpha_s = std::move(as);
  r.alpha_s_defaulted.assign(r.alpha_s.size(), false);
  return r;
}

double brute_e0(const std::vector<double>& q, std::size_t paths, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    std::size_t a = 0;
    while (a < q.size() && u(rng) >= q[a]) ++a;
    total += a == q.size() ? static_cast<double>(a) : static_cast<double>(a) + (a == 0 ? 0.3 : 0.5);
  }
  return total / static_cast<double>(paths);
}

}  // namespace

TEST_CASE("life table: hand cases") {
  const std::vector<double> q3{0.1, 0.1, 0.1};
  CHECK(life_table_e0(q3) == doctest::Approx(2.5545).epsilon(1e-12));
  CHECK(life_table_e0(std::vector<double>(7, 0.0)) == 7.0);
  std::vector<double> dead(5, 0.2);
  dead[0] = 1.0;
  CHECK(life_table_e0(dead) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(life_table_e0(std::vector<double>{0.1, 1.2}), Error);
  CHECK_THROWS_AS(life_table_e0(std::vector<double>{-0.1, 0.2}), Error);
}

TEST_CASE("life table agrees with a cohort simulation") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.25);
  std::vector<double> q(15);
  for (auto& v : q) v = u(rng);
  CHECK(std::abs(life_table_e0(q) - brute_e0(q, 200000, 3)) < 0.03);
}

TEST_CASE("speed blend") {
  const FlowField ff = field(-0.2, {0.0});
  CountryState st;
  st.scores = Vector::Zero(2);
  st.v_country = 0.7;
  CHECK(step_speed(ff, st, 1.0, 0.5, 3, 1.0).first == -0.2);
  CHECK(step_speed(ff, st, 0.0, 1.0, 1, 1.0).first == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(step_speed(ff, st, 0.0, 0.5, 2, 1.0).first == doctest::Approx(0.75 * -0.2 + 0.25 * 0.7).epsilon(1e-15));
  CHECK(step_speed(ff, st, 1.0, 0.5, 1, 1.0).second == doctest::Approx(0.8));
}

TEST_CASE("score relaxation") {
  const FlowField ff = field(0.0, {0.0, 1.0});
  CountryState st;
  st.scores = Vector(3);
  st.scores << 0.0, 4.0, 1.0;
  const Vector a = relax_scores(ff, st, rates(0.9, {0.0, 0.5, 0.5}), 1, 2.0);
  CHECK(a(0) == 2.0);
  CHECK(a(1) == doctest::Approx(2.0));
  CHECK(a(2) == doctest::Approx(1.0));
  const Vector z = relax_scores(ff, st, rates(0.9, {0.0, 0.0, 0.0}), 1, 2.0);
  CHECK(z(1) == 0.0);
  const Vector h = relax_scores(ff, st, rates(0.9, {0.0, 0.999, 0.0}), 1, 2.0);
  CHECK(h(1) == doctest::Approx(0.999 * 4.0));
}

TEST_CASE("jump-off weights") {
  CHECK(jumpoff_weight(2, 2.0) == 0.5);
  CHECK(jumpoff_weight(10, 2.0) == 0.03125);
  CHECK(jumpoff_weight(0, 2.0) == 1.0);
}

TEST_CASE("reconstruction adds the decayed jump-off residual") {
  const Toy t = toy();
  CountryState st;
  st.scores = Vector::Zero(3);
  Vector s(3);
  s << 0.3, -0.2, 0.1;
  const Matrix base = reconstruct_with_jumpoff(t.model, t.pca, st, s, 1, 2.0);
  CHECK((base - reconstruct_schedule(t.model, inverse(t.pca, s))).cwiseAbs().maxCoeff() == 0.0);
  st.delta0 = Matrix::Constant(2, 6, 0.8);
  const Matrix h2 = reconstruct_with_jumpoff(t.model, t.pca, st, s, 2, 2.0);
  const Matrix h3 = reconstruct_with_jumpoff(t.model, t.pca, st, s, 3, 2.0);
  CHECK(((h2 - base).array() - 0.4).abs().maxCoeff() < 1e-14);
  CHECK((h3 - base).norm() == doctest::Approx(std::exp2(-0.5) * (h2 - base).norm()).epsilon(1e-12));
}

TEST_CASE("engine: determinism, w-invariance, closed-form paths") {
  const Toy t = toy();
  const FlowField ff = field(-0.05, {0.1, -0.1});
  CountryState st;
  st.scores = Vector(3);
  st.scores << 0.2, 0.6, -0.3;
  st.delta0 = Matrix::Constant(2, 6, 0.01);
  ForecastConfig cfg;
  cfg.horizon = 20;
  cfg.rates = rates(0.7, {0.0, 0.5, 0.5});

  const ForecastResult a = run_forecast(t.model, t.pca, ff, st, cfg);
  const ForecastResult b = run_forecast(t.model, t.pca, ff, st, cfg);
  CHECK(a.e0_avg == b.e0_avg);
  CHECK(a.scores == b.scores);
  for (double v : {-1.0, 0.0, 1.0}) {
    CountryState s2 = st;
    s2.v_country = v;
    const ForecastResult c = run_forecast(t.model, t.pca, ff, s2, cfg);
    CHECK(c.e0_avg == a.e0_avg);
    CHECK(c.scores == a.scores);
  }
  for (int h = 1; h <= 20; ++h) {
    CHECK(a.scores(h - 1, 0) == doctest::Approx(0.2 - 0.05 * h).epsilon(1e-12));
    const double w = std::pow(0.5, h);
    CHECK(a.scores(h - 1, 1) == doctest::Approx(w * 0.6 + (1 - w) * 0.1).epsilon(1e-12));
    const auto i = static_cast<std::size_t>(h - 1);
    CHECK(a.e0_avg[i] == doctest::Approx(0.5 * (a.e0_female[i] + a.e0_male[i])));
    CHECK(a.e0_avg[i] > 0.0);
    CHECK(a.e0_avg[i] < 6.0);
  }

  // Zero speed: s1 constant and deviations halve every year.
  const FlowField still = field(0.0, {0.0, 0.0});
  const ForecastResult z = run_forecast(t.model, t.pca, still, st, cfg);
  for (int h = 1; h <= 20; ++h) {
    CHECK(z.scores(h - 1, 0) == 0.2);
    CHECK(z.scores(h - 1, 1) == doctest::Approx(0.6 * std::pow(0.5, h)).epsilon(1e-12));
  }

  ForecastConfig longrun = cfg;
  longrun.horizon = 500;
  longrun.rates = rates(0.7, {0.0, 0.98, 0.98});
  const ForecastResult l = run_forecast(t.model, t.pca, still, st, longrun);
  CHECK(std::abs(l.scores(499, 1)) < 1e-4);
  CHECK(std::abs(l.scores(499, 2)) < 1e-4);

  ForecastConfig bad = cfg;
  bad.w = 1.5;
  CHECK_THROWS_AS(run_forecast(t.model, t.pca, ff, st, bad), Error);
}

TEST_CASE("trailing velocity uses at most five gaps") {
  const std::vector<int> y{1, 2, 3, 4, 5, 6, 8};
  const std::vector<double> s{100, 0, 1, 2, 3, 4, 6};
  CHECK(trailing_velocity(y, s) == doctest::Approx(1.0));
  const std::vector<int> y2{1, 2};
  const std::vector<double> s2{0, 3};
  CHECK(trailing_velocity(y2, s2) == 3.0);
}

TEST_CASE("Tier-1 entry") {
  const FlowField ff = field(-0.1, {0.5, -0.5});
  const std::vector<E0Observation> flat{{2000, 70.0}, {2001, 70.0}, {2002, 70.0}};
  const CountryState a = tier1_state(ff, flat);
  CHECK(a.v_country == 0.0);
  CHECK(a.scores(0) == doctest::Approx(-20.0));
  CHECK(a.scores(1) == 0.5);
  CHECK(a.delta0.size() == 0);
  CHECK(a.origin_year == 2002);
  const std::vector<E0Observation> rising{{2000, 70.0}, {2002, 72.0}};
  CHECK(tier1_state(ff, rising).v_country == doctest::Approx(-1.0));
  const std::vector<E0Observation> one{{2000, 70.0}};
  try {
    tier1_state(ff, one);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
}

TEST_CASE("Tier-2 entry: round trip and out-of-span residual") {
  const Toy t = toy();
  const FlowField ff = field(-0.1, {0.0, 0.0});
  Vector s(3);
  s << 0.4, -1.1, 0.25;
  const Matrix z = reconstruct_schedule(t.model, inverse(t.pca, s));
  const CountryState a = tier2_state(t.model, t.pca, ff, z, 2010);
  CHECK((a.scores - s).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(a.delta0.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(a.v_country == -0.1);

  Matrix q = Matrix::Random(6, 1);
  q -= t.model.age_factor() * (t.model.age_factor().transpose() * q);
  const Matrix e = Matrix::Ones(2, 1) * q.transpose();
  const CountryState b = tier2_state(t.model, t.pca, ff, z + e, 2010);
  CHECK((b.delta0 - e).cwiseAbs().maxCoeff() < 1e-8);

  const std::vector<std::pair<int, double>> hist{{2008, 1.0}, {2009, 0.8}, {2010, 0.4}};
  CHECK(tier2_state(t.model, t.pca, ff, z, 2010, hist).v_country == doctest::Approx(-0.3));
}

TEST_CASE("prediction intervals") {
  ForecastResult r;
  r.schedules.resize(4, Matrix::Zero(2, 2));
  r.e0_avg = {70.0, 70.5, 71.0, 71.5};
  r.e0_female = r.e0_male = r.e0_avg;
  PICalibration c{SmoothFn({1.0, 4.0}, {0.0, 0.0}), 1.0, 1.0};
  const ForecastResult out = apply_intervals(r, c);
  REQUIRE(out.intervals);
  CHECK(out.intervals->hi95[3] - out.intervals->median[3] == doctest::Approx(3.92));
  CHECK(out.intervals->hi95[0] - out.intervals->median[0] == doctest::Approx(1.96));
  CHECK(out.intervals->hi80[0] - out.intervals->lo80[0] == doctest::Approx(2 * 1.2816));
  PICalibration wide{SmoothFn({1.0, 4.0}, {0.5, 0.5}), 0.8, 1.487};
  const ForecastResult p = apply_intervals(r, wide);
  CHECK(p.intervals->median[1] == doctest::Approx(70.0));
  CHECK(p.intervals->hi95[0] - p.intervals->median[0] == doctest::Approx(1.96 * 1.487 * 0.8));
  try {
    apply_intervals(r, std::nullopt);
    FAIL("expected CalibrationMissing");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CalibrationMissing);
  }
}
