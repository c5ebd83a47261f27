#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mortflow/convergence.hpp"
#include "mortflow/core_pca.hpp"
#include "mortflow/flowfield.hpp"
#include "mortflow/forecast.hpp"
#include "mortflow/tucker.hpp"

namespace mortflow {

inline constexpr std::string_view kArtifactVersion = "mortflow-artifact-v1";
inline constexpr std::string_view kTuckerVersion = "tucker-v1";
inline constexpr std::string_view kFlowFieldVersion = "flowfield-v1";

struct FitMetadata {
  int origin = 0;
  std::vector<std::string> countries;
  std::map<std::string, std::vector<int>> observed_years;  // per country, years <= origin
  nlohmann::json config = nlohmann::json::object();
  std::string config_hash;  // FNV-1a of the serialized config, hex

  friend bool operator==(const FitMetadata&, const FitMetadata&) = default;
};

struct ModelArtifact {
  std::string version{kArtifactVersion};
  TuckerModel tucker;
  CorePCA pca;
  FlowField flow;
  RelaxationRates rates;
  std::optional<PICalibration> calibration;
  FitMetadata meta;
};

/// Exact (bitwise value) equality of every stored field.
bool equal(const TuckerModel& a, const TuckerModel& b);
bool equal(const CorePCA& a, const CorePCA& b);
bool equal(const ModelArtifact& a, const ModelArtifact& b);

std::uint64_t fnv1a(std::string_view bytes);
std::string config_hash(const nlohmann::json& config);

/// Base64 of the little-endian float64 bytes of `values`.
std::string encode_doubles(const double* values, std::size_t count);
std::vector<double> decode_doubles(std::string_view text);

nlohmann::json to_json(const ModelArtifact& artifact);
/// Throws ParseError for malformed content and ConfigError for an unknown
/// version or a config hash that does not match the stored config.
ModelArtifact from_json(const nlohmann::json& j);

/// Serialized artifact text (two-space indentation, trailing newline).
std::string dump_artifact(const ModelArtifact& artifact);
void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_artifact(const std::filesystem::path& path);

/// State of a training country at its last observed year, rebuilt from the artifact.
CountryState artifact_state(const ModelArtifact& artifact, const std::string& country);

}  // namespace mortflow
