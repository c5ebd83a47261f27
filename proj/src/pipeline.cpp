#include "mortflow/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "mortflow/error.hpp"
#include "mortflow/life_table.hpp"

namespace mortflow {

std::vector<ObservedCountry> observed_scores(const TuckerModel& model, const CorePCA& pca,
                                             const MortalityTensor& tensor) {
  std::vector<ObservedCountry> out;
  for (Index c = 0; c < tensor.num_countries(); ++c) {
    ObservedCountry oc;
    oc.country = tensor.countries()[static_cast<std::size_t>(c)];
    std::vector<Vector> rows;
    for (Index t = 0; t < tensor.num_years(); ++t) {
      if (!tensor.observed(c, t)) continue;
      oc.years.push_back(tensor.years()[static_cast<std::size_t>(t)]);
      rows.push_back(scores(pca, effective_core(model, c, t)));
      oc.e0.push_back(schedule_e0(tensor.slice(c, t)).average());
    }
    oc.scores.resize(static_cast<Index>(rows.size()), pca.components());
    for (std::size_t i = 0; i < rows.size(); ++i) oc.scores.row(static_cast<Index>(i)) = rows[i].transpose();
    out.push_back(std::move(oc));
  }
  return out;
}

FittedModel fit_pipeline(const MortalityTensor& tensor, int origin, const PipelineConfig& config,
                         const std::optional<std::vector<Index>>& countries) {
  std::vector<Index> keep;
  if (countries) {
    keep = *countries;
  } else {
    keep.resize(static_cast<std::size_t>(tensor.num_countries()));
    std::iota(keep.begin(), keep.end(), Index{0});
  }
  // Countries without any observation up to the origin carry no information.
  std::erase_if(keep, [&](Index c) {
    const auto ys = tensor.observed_years(c);
    return ys.empty() || ys.front() > origin;
  });
  if (keep.size() < 2) fail(ErrorKind::InsufficientData, "need at least two countries observed by the origin");

  const MortalityTensor train = tensor.restrict(keep, origin);
  Ranks ranks = config.ranks;
  if (config.clip_ranks) ranks = clip_ranks(ranks, train.values().dims());

  FittedModel fit;
  for (const auto& id : train.countries()) fit.provenance.insert(lineage_tag(id));
  fit.tucker = hosvd(train, ranks);
  fit.pca = fit_core_pca(fit.tucker, train.mask(), config.components);

  const auto observed = observed_scores(fit.tucker, fit.pca, train);
  SeriesBuildResult built = build_country_series(observed);
  fit.series = std::move(built.series);
  fit.skipped = std::move(built.skipped);
  if (fit.series.empty()) fail(ErrorKind::InsufficientData, "no country has five observed years");

  fit.flow = fit_flowfield(fit.series, origin, config.flow);
  fit.rates = estimate_rates(compute_deviations(fit.flow, fit.series), config.max_lag);
  return fit;
}

CountryState training_state(const FittedModel& fit, const std::string& country) {
  const auto it = std::find_if(fit.tucker.countries.begin(), fit.tucker.countries.end(),
                               [&](const std::string& id) { return id == country; });
  if (it == fit.tucker.countries.end()) fail(ErrorKind::IndexError, "country " + country + " is not in the model");
  const auto c = static_cast<Index>(it - fit.tucker.countries.begin());

  const auto s_it = std::find_if(fit.series.begin(), fit.series.end(),
                                 [&](const CountryScoreSeries& s) { return s.country == country; });
  if (s_it == fit.series.end()) {
    fail(ErrorKind::InsufficientData, "country " + country + " has too few observed years for a forecast");
  }
  const CountryScoreSeries& s = *s_it;
  const int last = s.years.back();
  const auto t = static_cast<Index>(std::find(fit.tucker.years.begin(), fit.tucker.years.end(), last) -
                                    fit.tucker.years.begin());

  CountryState st;
  st.country = country;
  st.origin_year = last;
  st.scores = s.scores.row(static_cast<Index>(s.size()) - 1).transpose();
  std::vector<double> s1(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) s1[i] = s.scores(static_cast<Index>(i), 0);
  st.v_country = trailing_velocity(s.years, s1);
  st.delta0 = jumpoff_residual(fit.tucker, fit.pca, effective_core(fit.tucker, c, t));
  return st;
}

CountryState projected_state(const FittedModel& fit, const MortalityTensor& tensor, Index c, int origin) {
  std::vector<std::pair<int, double>> history;
  Index last_t = -1;
  for (Index t = 0; t < tensor.num_years(); ++t) {
    const int year = tensor.years()[static_cast<std::size_t>(t)];
    if (year > origin) break;
    if (!tensor.observed(c, t)) continue;
    const ScoreVector s = scores(fit.pca, project_schedule(fit.tucker, tensor.slice(c, t)));
    history.emplace_back(year, s(0));
    last_t = t;
  }
  if (last_t < 0) fail(ErrorKind::MissingData, "country has no observed schedule at or before the origin");
  const int origin_year = tensor.years()[static_cast<std::size_t>(last_t)];
  return tier2_state(fit.tucker, fit.pca, fit.flow, tensor.slice(c, last_t), origin_year, history,
                     tensor.countries()[static_cast<std::size_t>(c)]);
}

}  // namespace mortflow
