#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mortflow/data_model.hpp"

namespace mortflow {

/// Reads `country,sex,age,year,deaths,exposure` or `country,sex,age,year,mx`
/// (columns matched by header name, sex coded f/m). Malformed rows raise
/// ParseError naming the line.
std::vector<RawRecord> read_records_csv(std::istream& in);
std::vector<RawRecord> read_records_csv(const std::filesystem::path& path);

/// Writes the rate form when every record carries mx, otherwise deaths/exposure.
void write_records_csv(std::ostream& out, const std::vector<RawRecord>& records);

struct E0Observation {
  int year = 0;
  double e0 = 0.0;
};

/// `year,e0` series for external populations.
std::vector<E0Observation> read_e0_csv(const std::filesystem::path& path);

char sex_code(Sex sex);

}  // namespace mortflow
