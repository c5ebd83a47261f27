#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mortflow {

enum class ErrorKind {
  MissingData,
  DegenerateExposure,
  ShapeMismatch,
  RankError,
  DataError,
  IndexError,
  InsufficientData,
  EmptyEra,
  TailConfigError,
  DomainError,
  CalibrationMissing,
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingData: return "MissingData";
    case ErrorKind::DegenerateExposure: return "DegenerateExposure";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::RankError: return "RankError";
    case ErrorKind::DataError: return "DataError";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::EmptyEra: return "EmptyEra";
    case ErrorKind::TailConfigError: return "TailConfigError";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::CalibrationMissing: return "CalibrationMissing";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Error";
}

}  // namespace mortflow
