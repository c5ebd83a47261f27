#pragma once

#include <array>
#include <span>

#include "mortflow/tensor4.hpp"

namespace mortflow {

/// Period life expectancy at birth from single-age death probabilities:
/// l0 = 1, l_{a+1} = l_a (1 - q_a), L0 = 0.3 l0 + 0.7 l1, L_a = (l_a + l_{a+1}) / 2,
/// e0 = sum of L_a over the age grid. Throws DomainError for qx outside [0, 1].
double life_table_e0(std::span<const double> qx);
double life_table_e0(const Vector& qx);

/// Survivorship l_0..l_{A-1}.
Vector survivorship(const Vector& qx);

struct SexE0 {
  double female = 0.0;
  double male = 0.0;
  double average() const { return 0.5 * (female + male); }
};

/// e0 per sex from a 2 x A logit(qx) schedule.
SexE0 schedule_e0(const Matrix& logit_qx);

}  // namespace mortflow
