#include "mortflow/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mortflow/error.hpp"

namespace mortflow {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, std::size_t line, const char* column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(line, std::string("invalid number in column '") + column + "': '" + s + "'");
  }
}

int parse_int(const std::string& s, std::size_t line, const char* column) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    parse_fail(line, std::string("invalid integer in column '") + column + "': '" + s + "'");
  }
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

char sex_code(Sex sex) { return sex == Sex::Female ? 'f' : 'm'; }

std::vector<RawRecord> read_records_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!blank(line)) break;
  }
  if (lineno == 0 || blank(line)) fail(ErrorKind::ParseError, "empty input, expected a header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);

  std::map<std::string, std::size_t> col;
  const auto header = split_line(line);
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"country", "sex", "age", "year"}) {
    if (!col.count(required)) parse_fail(lineno, std::string("header lacks column '") + required + "'");
  }
  const bool rate_form = col.count("mx") > 0;
  if (!rate_form && !(col.count("deaths") && col.count("exposure"))) {
    parse_fail(lineno, "header needs either 'mx' or both 'deaths' and 'exposure'");
  }

  std::vector<RawRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split_line(line);
    if (f.size() != header.size()) {
      parse_fail(lineno, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    }
    RawRecord r;
    r.country = f[col["country"]];
    if (r.country.empty()) parse_fail(lineno, "empty country");
    const auto& sex = f[col["sex"]];
    if (sex == "f" || sex == "F") {
      r.sex = Sex::Female;
    } else if (sex == "m" || sex == "M") {
      r.sex = Sex::Male;
    } else {
      parse_fail(lineno, "sex must be 'f' or 'm', got '" + sex + "'");
    }
    r.age = parse_int(f[col["age"]], lineno, "age");
    r.year = parse_int(f[col["year"]], lineno, "year");
    if (rate_form) {
      r.mx = parse_double(f[col["mx"]], lineno, "mx");
      if (*r.mx < 0.0) parse_fail(lineno, "negative mx");
    } else {
      r.deaths = parse_double(f[col["deaths"]], lineno, "deaths");
      r.exposure = parse_double(f[col["exposure"]], lineno, "exposure");
      if (r.deaths < 0.0) parse_fail(lineno, "negative deaths");
      if (r.exposure <= 0.0) parse_fail(lineno, "exposure must be positive");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open " + path.string());
  return read_records_csv(in);
}

void write_records_csv(std::ostream& out, const std::vector<RawRecord>& records) {
  const bool rate_form = std::all_of(records.begin(), records.end(), [](const RawRecord& r) { return r.mx.has_value(); });
  out << std::setprecision(17);
  out << (rate_form ? "country,sex,age,year,mx\n" : "country,sex,age,year,deaths,exposure\n");
  for (const auto& r : records) {
    out << r.country << ',' << sex_code(r.sex) << ',' << r.age << ',' << r.year << ',';
    if (rate_form) {
      out << *r.mx << '\n';
    } else {
      out << r.deaths << ',' << r.exposure << '\n';
    }
  }
}

std::vector<E0Observation> read_e0_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> col;
  std::vector<E0Observation> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < f.size(); ++i) col[f[i]] = i;
      if (!col.count("year") || !col.count("e0")) parse_fail(lineno, "header must contain 'year' and 'e0'");
      continue;
    }
    if (f.size() != col.size()) parse_fail(lineno, "wrong number of fields");
    out.push_back({parse_int(f[col["year"]], lineno, "year"), parse_double(f[col["e0"]], lineno, "e0")});
  }
  std::sort(out.begin(), out.end(), [](const E0Observation& a, const E0Observation& b) { return a.year < b.year; });
  return out;
}

}  // namespace mortflow
