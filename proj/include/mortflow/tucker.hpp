#pragma once

#include <array>
#include <string>
#include <vector>

#include "mortflow/data_model.hpp"
#include "mortflow/tensor4.hpp"

namespace mortflow {

/// Tucker ranks along (sex, age, country, year).
struct Ranks {
  std::array<Index, 4> r{1, 1, 1, 1};

  Index operator[](int mode) const { return r[static_cast<std::size_t>(mode)]; }
  friend bool operator==(const Ranks&, const Ranks&) = default;
};

/// Ranks reduced componentwise to the given dimensions.
Ranks clip_ranks(const Ranks& ranks, const Tensor4::Dims& dims);

/// r1 x r2 matrix that, with the sex and age factors, determines one schedule.
using EffectiveCore = Matrix;

struct TuckerModel {
  std::array<Matrix, 4> factors;  // sex S x r1, age A x r2, country C x r3, year T x r4
  Tensor4 core;                   // r1 x r2 x r3 x r4
  Ranks ranks;
  std::vector<std::string> countries;
  std::vector<int> years;

  const Matrix& sex_factor() const { return factors[0]; }
  const Matrix& age_factor() const { return factors[1]; }
  const Matrix& country_factor() const { return factors[2]; }
  const Matrix& year_factor() const { return factors[3]; }
};

/// Truncated HOSVD. Unobserved country-years are filled with the per-(sex,
/// age) mean over observed cells before the mode SVDs. Each singular vector
/// has its largest-magnitude entry made positive.
TuckerModel hosvd(const MortalityTensor& tensor, const Ranks& ranks);

/// Plain HOSVD of a complete tensor (no mask handling).
TuckerModel hosvd(const Tensor4& tensor, const Ranks& ranks);

/// Full reconstruction G x1 S x2 A x3 C x4 T.
Tensor4 reconstruct_tensor(const TuckerModel& model);

/// G_ct[i,j] = sum_{k,l} G[i,j,k,l] C[c,k] T[t,l].
EffectiveCore effective_core(const TuckerModel& model, Index c, Index t);

/// S * g * A^T.
Matrix reconstruct_schedule(const TuckerModel& model, const EffectiveCore& g);

/// Least-squares core for an S x A logit(qx) schedule: S^+ Z (A^+)^T, which is
/// S^T Z A for orthonormal factors.
EffectiveCore project_schedule(const TuckerModel& model, const Matrix& z);

}  // namespace mortflow
