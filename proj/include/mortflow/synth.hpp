#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mortflow/data_model.hpp"
#include "mortflow/tensor4.hpp"

namespace mortflow {

/// Synthetic populations following a known flow field:
///   logit q(s, a, t) = mu(s, a) + sum_k s_k(t) B_k(s, a) + noise,
/// with orthonormal patterns B_k, s1(t+1) = s1(t) + g(s1(t)) + speed noise,
/// g(s1) = speed_intercept + speed_slope * s1, and s_k = c_k s1 + d_k where
/// d_k is AR(1) with coefficient alpha_struct[k - 1].
struct SyntheticSpec {
  int countries = 6;
  int first_year = 1900;
  int years = 100;
  int ages = 110;
  int components = 3;
  double speed_intercept = -0.30;
  double speed_slope = 0.005;
  double speed_noise = 0.02;
  double s1_start_min = 5.0;
  double s1_start_max = 15.0;
  std::vector<double> lockstep{-0.3, 0.2};     // c_k for k = 2..N
  std::vector<double> alpha_struct{0.9, 0.9};  // AR(1) coefficient per structural score
  double struct_sigma = 0.3;                   // AR(1) innovation SD
  double obs_noise = 0.01;                     // iid noise on logit q
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<RawRecord> records;        // mx form
  std::vector<std::string> countries;
  std::vector<int> years;
  std::vector<Matrix> scores;            // per country: years x N true scores
  std::vector<Matrix> deviations;        // per country: years x (N - 1) AR(1) parts
  Matrix mean_schedule;                  // S x A
  std::vector<Matrix> patterns;          // B_k, S x A, orthonormal
};

/// Throws ConfigError for inconsistent dimensions.
void validate(const SyntheticSpec& spec);
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Ground-truth parameters written next to the dataset.
nlohmann::json truth_json(const SyntheticSpec& spec, const SyntheticData& data);

}  // namespace mortflow
