#include "mortflow/artifact.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mortflow/error.hpp"

namespace mortflow {

using nlohmann::json;

namespace {

bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && std::equal(a.data(), a.data() + a.size(), b.data());
}

bool same(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64(const std::vector<unsigned char>& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{in[i]} << 16) | (std::uint32_t{in[i + 1]} << 8) | in[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  if (const std::size_t rest = in.size() - i; rest > 0) {
    std::uint32_t v = std::uint32_t{in[i]} << 16;
    if (rest == 2) v |= std::uint32_t{in[i + 1]} << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> unbase64(std::string_view in) {
  if (in.size() % 4 != 0) fail(ErrorKind::ParseError, "base64 block length is not a multiple of 4");
  std::array<int, 256> rev;
  rev.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) rev[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char ch = in[i + j];
      int d = 0;
      if (ch == '=' && i + 4 == in.size() && j >= 2) {
        ++pad;
      } else {
        d = rev[static_cast<unsigned char>(ch)];
        if (d < 0 || pad > 0) fail(ErrorKind::ParseError, "invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

json matrix_json(const Matrix& m) {
  // Eigen is column-major; blocks are row-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", encode_doubles(r.data(), static_cast<std::size_t>(r.size()))}};
}

Matrix matrix_from(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto v = decode_doubles(j.at("data").get<std::string>());
  if (rows < 0 || cols < 0 || static_cast<Index>(v.size()) != rows * cols) {
    fail(ErrorKind::ParseError, "matrix block size does not match its shape");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) m(i, k) = v[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

json vector_json(const Vector& v) { return matrix_json(Matrix(v)); }

Vector vector_from(const json& j) {
  const Matrix m = matrix_from(j);
  if (m.cols() != 1) fail(ErrorKind::ParseError, "expected a column vector block");
  return m.col(0);
}

json smooth_json(const SmoothFn& f) { return {{"knots", f.knots()}, {"values", f.values()}}; }

SmoothFn smooth_from(const json& j) {
  return SmoothFn(j.at("knots").get<std::vector<double>>(), j.at("values").get<std::vector<double>>());
}

json extended_json(const ExtendedFn& f) {
  json j = smooth_json(f.base());
  if (const auto& t = f.tail()) {
    j["tail"] = {{"x_star", t->x_star}, {"slope", t->slope}, {"delta", t->delta},
                 {"blend_width", t->blend_width}, {"direction", t->direction}};
  } else {
    j["tail"] = nullptr;
  }
  return j;
}

ExtendedFn extended_from(const json& j) {
  std::optional<TailExtension> tail;
  if (const auto& t = j.at("tail"); !t.is_null()) {
    tail = TailExtension{t.at("x_star").get<double>(), t.at("slope").get<double>(), t.at("delta").get<double>(),
                         t.at("blend_width").get<double>(), t.at("direction").get<int>()};
  }
  return ExtendedFn(smooth_from(j), tail);
}

json tucker_json(const TuckerModel& m) {
  json f = json::array();
  for (const auto& fac : m.factors) f.push_back(matrix_json(fac));
  const auto& d = m.core.dims();
  return {{"version", kTuckerVersion},
          {"ranks", m.ranks.r},
          {"countries", m.countries},
          {"years", m.years},
          {"factors", f},
          {"core", {{"dims", d}, {"data", encode_doubles(m.core.data().data(), m.core.data().size())}}}};
}

TuckerModel tucker_from(const json& j) {
  if (j.at("version").get<std::string>() != kTuckerVersion) fail(ErrorKind::ConfigError, "unknown Tucker block version");
  TuckerModel m;
  m.ranks.r = j.at("ranks").get<std::array<Index, 4>>();
  m.countries = j.at("countries").get<std::vector<std::string>>();
  m.years = j.at("years").get<std::vector<int>>();
  const auto& f = j.at("factors");
  if (f.size() != 4) fail(ErrorKind::ParseError, "Tucker block needs four factors");
  for (std::size_t i = 0; i < 4; ++i) m.factors[i] = matrix_from(f[i]);
  const auto dims = j.at("core").at("dims").get<Tensor4::Dims>();
  m.core = Tensor4(dims);
  m.core.data() = decode_doubles(j.at("core").at("data").get<std::string>());
  if (static_cast<Index>(m.core.data().size()) != dims[0] * dims[1] * dims[2] * dims[3]) {
    fail(ErrorKind::ParseError, "core block size does not match its dimensions");
  }
  return m;
}

json flow_config_json(const FlowConfig& c) {
  return {{"tau", c.tau},
          {"window", c.window},
          {"bandwidth", c.bandwidth},
          {"seed", c.seed},
          {"n_max", c.n_max},
          {"tail", {{"e0_star", c.tail.e0_star}, {"delta", c.tail.delta}, {"blend_width", c.tail.blend_width}}}};
}

FlowConfig flow_config_from(const json& j) {
  FlowConfig c;
  c.tau = j.at("tau").get<double>();
  c.window = j.at("window").get<double>();
  c.bandwidth = j.at("bandwidth").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_max = j.at("n_max").get<std::size_t>();
  const auto& t = j.at("tail");
  c.tail = TailConfig{t.at("e0_star").get<double>(), t.at("delta").get<double>(), t.at("blend_width").get<double>()};
  return c;
}

json flow_json(const FlowField& ff) {
  json traj = json::array();
  for (const auto& t : ff.trajectories) traj.push_back(extended_json(t));
  return {{"version", kFlowFieldVersion},
          {"speed", extended_json(ff.speed)},
          {"trajectories", traj},
          {"s1_of_e0", extended_json(ff.s1_of_e0)},
          {"e0_of_s1", extended_json(ff.e0_of_s1)},
          {"s1_star", ff.s1_star},
          {"s1_star_requested", ff.s1_star_requested},
          {"era", {{"origin", ff.era.origin}, {"tau", ff.era.tau}, {"window", ff.era.window}}},
          {"config", flow_config_json(ff.config)}};
}

FlowField flow_from(const json& j) {
  if (j.at("version").get<std::string>() != kFlowFieldVersion) {
    fail(ErrorKind::ConfigError, "unknown flow-field block version");
  }
  FlowField ff;
  ff.speed = extended_from(j.at("speed"));
  for (const auto& t : j.at("trajectories")) ff.trajectories.push_back(extended_from(t));
  ff.s1_of_e0 = extended_from(j.at("s1_of_e0"));
  ff.e0_of_s1 = extended_from(j.at("e0_of_s1"));
  ff.s1_star = j.at("s1_star").get<double>();
  ff.s1_star_requested = j.at("s1_star_requested").get<double>();
  const auto& e = j.at("era");
  ff.era = EraKernel{e.at("origin").get<int>(), e.at("tau").get<double>(), e.at("window").get<double>()};
  ff.config = flow_config_from(j.at("config"));
  return ff;
}

}  // namespace

bool equal(const TuckerModel& a, const TuckerModel& b) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!same(a.factors[i], b.factors[i])) return false;
  }
  return a.core == b.core && a.ranks == b.ranks && a.countries == b.countries && a.years == b.years;
}

bool equal(const CorePCA& a, const CorePCA& b) {
  return same(a.mean, b.mean) && same(a.loadings, b.loadings) && same(a.explained_variance, b.explained_variance) &&
         a.core_rows == b.core_rows && a.core_cols == b.core_cols;
}

bool equal(const ModelArtifact& a, const ModelArtifact& b) {
  return a.version == b.version && equal(a.tucker, b.tucker) && equal(a.pca, b.pca) && a.flow == b.flow &&
         a.rates == b.rates && a.calibration == b.calibration && a.meta == b.meta;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

std::string encode_doubles(const double* values, std::size_t count) {
  std::vector<unsigned char> bytes;
  bytes.reserve(count * 8);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
  }
  return base64(bytes);
}

std::vector<double> decode_doubles(std::string_view text) {
  const auto bytes = unbase64(text);
  if (bytes.size() % 8 != 0) fail(ErrorKind::ParseError, "float64 block length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json to_json(const ModelArtifact& a) {
  json rel = {{"alpha_v", a.rates.alpha_v},
              {"alpha_s", a.rates.alpha_s},
              {"alpha_v_defaulted", a.rates.alpha_v_defaulted},
              {"alpha_s_defaulted", a.rates.alpha_s_defaulted},
              {"half_lives", a.rates.half_lives()}};
  json cal = nullptr;
  if (a.calibration) {
    cal = {{"bias", smooth_json(a.calibration->bias)}, {"sigma1", a.calibration->sigma1}, {"kappa", a.calibration->kappa}};
  }
  json years = json::object();
  for (const auto& [c, ys] : a.meta.observed_years) years[c] = ys;
  return {{"version", a.version},
          {"tucker", tucker_json(a.tucker)},
          {"pca",
           {{"g_bar", vector_json(a.pca.mean)},
            {"loadings", matrix_json(a.pca.loadings)},
            {"explained_variance", vector_json(a.pca.explained_variance)},
            {"core_rows", a.pca.core_rows},
            {"core_cols", a.pca.core_cols}}},
          {"flowfield", flow_json(a.flow)},
          {"relaxation", rel},
          {"calibration", cal},
          {"metadata",
           {{"origin", a.meta.origin},
            {"countries", a.meta.countries},
            {"observed_years", years},
            {"config", a.meta.config},
            {"config_hash", a.meta.config_hash}}}};
}

ModelArtifact from_json(const json& j) {
  try {
    ModelArtifact a;
    a.version = j.at("version").get<std::string>();
    if (a.version != kArtifactVersion) fail(ErrorKind::ConfigError, "unrecognized artifact version " + a.version);
    a.tucker = tucker_from(j.at("tucker"));
    const auto& p = j.at("pca");
    a.pca.mean = vector_from(p.at("g_bar"));
    a.pca.loadings = matrix_from(p.at("loadings"));
    a.pca.explained_variance = vector_from(p.at("explained_variance"));
    a.pca.core_rows = p.at("core_rows").get<Index>();
    a.pca.core_cols = p.at("core_cols").get<Index>();
    a.flow = flow_from(j.at("flowfield"));
    const auto& r = j.at("relaxation");
    a.rates.alpha_v = r.at("alpha_v").get<double>();
    a.rates.alpha_s = r.at("alpha_s").get<std::vector<double>>();
    a.rates.alpha_v_defaulted = r.at("alpha_v_defaulted").get<bool>();
    a.rates.alpha_s_defaulted = r.at("alpha_s_defaulted").get<std::vector<bool>>();
    if (const auto& c = j.at("calibration"); !c.is_null()) {
      a.calibration = PICalibration{smooth_from(c.at("bias")), c.at("sigma1").get<double>(), c.at("kappa").get<double>()};
    }
    const auto& m = j.at("metadata");
    a.meta.origin = m.at("origin").get<int>();
    a.meta.countries = m.at("countries").get<std::vector<std::string>>();
    for (const auto& [c, ys] : m.at("observed_years").items()) a.meta.observed_years[c] = ys.get<std::vector<int>>();
    a.meta.config = m.at("config");
    a.meta.config_hash = m.at("config_hash").get<std::string>();
    if (a.meta.config_hash != config_hash(a.meta.config)) {
      fail(ErrorKind::ConfigError, "artifact config hash does not match its config");
    }
    if (a.pca.components() != a.flow.components() || static_cast<Index>(a.rates.alpha_s.size()) != a.pca.components()) {
      fail(ErrorKind::ParseError, "artifact blocks disagree on the number of scores");
    }
    return a;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed artifact: ") + e.what());
  }
}

std::string dump_artifact(const ModelArtifact& artifact) { return to_json(artifact).dump(2) + "\n"; }

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::ConfigError, "cannot write " + path.string());
  out << dump_artifact(artifact);
  if (!out) fail(ErrorKind::ConfigError, "failed writing " + path.string());
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ConfigError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

CountryState artifact_state(const ModelArtifact& a, const std::string& country) {
  const auto& ids = a.tucker.countries;
  const auto it = std::find(ids.begin(), ids.end(), country);
  const auto yit = a.meta.observed_years.find(country);
  if (it == ids.end() || yit == a.meta.observed_years.end() || yit->second.empty()) {
    fail(ErrorKind::IndexError, "country " + country + " is not in the model");
  }
  const auto c = static_cast<Index>(it - ids.begin());
  const auto& years = yit->second;
  std::vector<double> s1;
  ScoreVector last;
  EffectiveCore g_last;
  for (int y : years) {
    const auto t = std::find(a.tucker.years.begin(), a.tucker.years.end(), y) - a.tucker.years.begin();
    if (t >= static_cast<std::ptrdiff_t>(a.tucker.years.size())) fail(ErrorKind::IndexError, "observed year outside the model");
    g_last = effective_core(a.tucker, c, static_cast<Index>(t));
    last = scores(a.pca, g_last);
    s1.push_back(last(0));
  }
  CountryState st;
  st.country = country;
  st.origin_year = years.back();
  st.scores = last;
  st.v_country = years.size() >= 2 ? trailing_velocity(years, s1) : a.flow.speed(last(0));
  st.delta0 = jumpoff_residual(a.tucker, a.pca, g_last);
  return st;
}

}  // namespace mortflow
