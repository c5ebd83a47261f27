#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mortflow/convergence.hpp"
#include "mortflow/core_pca.hpp"
#include "mortflow/data_model.hpp"
#include "mortflow/flowfield.hpp"
#include "mortflow/forecast.hpp"
#include "mortflow/tucker.hpp"

namespace mortflow {

struct PipelineConfig {
  Ranks ranks{{2, 6, 4, 10}};
  Index components = 5;
  FlowConfig flow;
  int max_lag = 30;
  bool clip_ranks = false;  // reduce ranks to the training dimensions instead of failing
};

/// Everything fitted from a training tensor.
struct FittedModel {
  TuckerModel tucker;
  CorePCA pca;
  FlowField flow;
  RelaxationRates rates;
  std::vector<CountryScoreSeries> series;
  std::vector<std::string> skipped;
  std::set<std::string> provenance;  // lineage tags of every country that fed the fit
};

/// Lineage tag for a country's records.
inline std::string lineage_tag(const std::string& country) { return "country:" + country; }

/// Per-country score and e0 histories from the in-sample effective cores.
/// e0 is the life-table e0 of the observed schedule.
std::vector<ObservedCountry> observed_scores(const TuckerModel& model, const CorePCA& pca,
                                             const MortalityTensor& tensor);

/// Tucker -> PCA -> country series -> flow field -> relaxation rates on the
/// given countries restricted to years <= origin.
FittedModel fit_pipeline(const MortalityTensor& tensor, int origin, const PipelineConfig& config,
                         const std::optional<std::vector<Index>>& countries = std::nullopt);

/// State of a training country at its last observed year <= origin, from the
/// in-sample effective core.
CountryState training_state(const FittedModel& fit, const std::string& country);

/// Tier-2 state of an arbitrary country in `tensor` at its last observed
/// year <= origin, projected through the fitted basis, with the s1 history
/// of its observed schedules.
CountryState projected_state(const FittedModel& fit, const MortalityTensor& tensor, Index c, int origin);

}  // namespace mortflow
