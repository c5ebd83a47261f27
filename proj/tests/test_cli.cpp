#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "mortflow/artifact.hpp"

using namespace mortflow;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path workdir() {
  static const bool fresh = fs::remove_all(fs::temp_directory_path() / "mortflow_cli_test") >= 0;
  (void)fresh;
  const fs::path d = fs::temp_directory_path() / "mortflow_cli_test";
  fs::create_directories(d);
  return d;
}

// One synthetic dataset and fitted model shared by the tests below.
struct Fixture {
  fs::path dir = workdir();
  fs::path data = dir / "syn.csv";
  fs::path model = dir / "model.json";

  Fixture() {
    static bool made = false;
    if (!made) {
      made = true;
      REQUIRE(run({"synth", "--out", data.string(), "--countries", "4", "--years", "60", "--seed", "3"}).code == 0);
      REQUIRE(run({"fit", "--input", data.string(), "--ranks", "2,8,4,60", "--pcs", "3", "--output", model.string()})
                  .code == 0);
    }
  }
};

}  // namespace

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code(ErrorKind::ParseError) == 2);
  CHECK(cli::exit_code(ErrorKind::RankError) == 2);
  CHECK(cli::exit_code(ErrorKind::CalibrationMissing) == 2);
  CHECK(cli::exit_code(ErrorKind::MissingData) == 3);
  CHECK(cli::exit_code(ErrorKind::DegenerateExposure) == 3);
  CHECK(cli::exit_code(ErrorKind::EmptyEra) == 4);
  CHECK(cli::exit_code(ErrorKind::DomainError) == 4);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"fit"}).code == 2);
  CHECK(run({"fit", "--input", "x.csv", "--bogus", "1"}).code == 2);
  CHECK(run({"fit", "--input", (workdir() / "does_not_exist.csv").string()}).code == 2);
}

TEST_CASE("synth is reproducible from its seed") {
  const fs::path d = workdir();
  const auto a = d / "a.csv", b = d / "b.csv", c = d / "c.csv";
  REQUIRE(run({"synth", "--out", a.string(), "--countries", "2", "--years", "10", "--seed", "9"}).code == 0);
  REQUIRE(run({"synth", "--out", b.string(), "--countries", "2", "--years", "10", "--seed", "9"}).code == 0);
  REQUIRE(run({"synth", "--out", c.string(), "--countries", "2", "--years", "10", "--seed", "10"}).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(fs::exists(d / "a.truth.json"));
}

TEST_CASE("data errors exit 3") {
  const fs::path p = workdir() / "dup.csv";
  {
    std::ofstream f(p);
    f << "country,sex,age,year,deaths,exposure\n";
    f << "AAA,f,0,2000,5,1000\nAAA,f,0,2000,5,1000\nAAA,m,0,2000,6,1000\n";
  }
  CHECK(run({"fit", "--input", p.string(), "--ages", "1"}).code == 3);
}

TEST_CASE("fit, forecast and interval handling") {
  Fixture fx;
  const ModelArtifact m = load_artifact(fx.model);
  CHECK(m.meta.countries.size() == 4);

  const Run bad_rank = run({"fit", "--input", fx.data.string(), "--ranks", "3,8,4,60", "--output",
                            (fx.dir / "bad.json").string()});
  CHECK(bad_rank.code == 2);

  const auto prefix = (fx.dir / "fc").string();
  const Run f = run({"forecast", "--model", fx.model.string(), "--country", "SYN01", "--horizon", "15", "--out-prefix",
                     prefix});
  CHECK(f.code == 0);
  const std::string summary = slurp(prefix + "_summary.csv");
  std::size_t lines = 0;
  for (char ch : summary) lines += ch == '\n';
  CHECK(lines == 16);
  CHECK(summary.find(",,,,\n") != std::string::npos);

  CHECK(run({"forecast", "--model", fx.model.string(), "--country", "SYN01", "--intervals", "--out-prefix", prefix})
            .code == 2);
  CHECK(run({"forecast", "--model", fx.model.string(), "--country", "NOPE", "--out-prefix", prefix}).code == 2);
  CHECK(run({"forecast", "--model", fx.model.string(), "--country", "SYN01", "--tier1-e0", "x.csv"}).code == 2);

  const fs::path one = fx.dir / "one.csv";
  {
    std::ofstream e(one);
    e << "year,e0\n2000,75.0\n";
  }
  CHECK(run({"forecast", "--model", fx.model.string(), "--tier1-e0", one.string(), "--out-prefix", prefix}).code == 2);

  const fs::path two = fx.dir / "two.csv";
  {
    std::ofstream e(two);
    e << "year,e0\n1995,70.0\n2000,71.0\n";
  }
  CHECK(run({"forecast", "--model", fx.model.string(), "--tier1-e0", two.string(), "--horizon", "10", "--out-prefix",
             prefix})
            .code == 0);
}

TEST_CASE("cross-validation output is independent of the worker count") {
  Fixture fx;
  const fs::path model = fx.dir / "cv_model.json";
  fs::copy_file(fx.model, model, fs::copy_options::overwrite_existing);
  const std::vector<std::string> common{"cv", "--input", fx.data.string(), "--ranks", "2,8,4,60", "--pcs", "3",
                                        "--horizon", "10", "--grid-w", "1", "--grid-tau", "12"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = common;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  const auto p1 = (fx.dir / "j1").string();
  const auto p4 = (fx.dir / "j4").string();
  const Run r1 = with({"--jobs", "1", "--out-prefix", p1, "--model", model.string()});
  INFO(r1.err);
  REQUIRE(r1.code == 0);
  REQUIRE(with({"--jobs", "4", "--out-prefix", p4}).code == 0);
  CHECK(slurp(p1 + "_records.csv") == slurp(p4 + "_records.csv"));
  CHECK(slurp(p1 + "_grid.csv") == slurp(p4 + "_grid.csv"));
  CHECK(fs::exists(p1 + "_metrics.json"));

  const ModelArtifact calibrated = load_artifact(model);
  REQUIRE(calibrated.calibration.has_value());
  const auto prefix = (fx.dir / "fci").string();
  CHECK(run({"forecast", "--model", model.string(), "--country", "SYN02", "--intervals", "--horizon", "5", "--out-prefix",
             prefix})
            .code == 0);
  CHECK(slurp(prefix + "_summary.csv").find(",,,,\n") == std::string::npos);
}
