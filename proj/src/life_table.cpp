#include "mortflow/life_table.hpp"

#include <cmath>

#include "mortflow/data_model.hpp"
#include "mortflow/error.hpp"

namespace mortflow {

double life_table_e0(std::span<const double> qx) {
  double l = 1.0;
  double e0 = 0.0;
  for (std::size_t a = 0; a < qx.size(); ++a) {
    const double q = qx[a];
    if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::DomainError, "qx outside [0, 1] at age " + std::to_string(a));
    const double next = l * (1.0 - q);
    e0 += (a == 0) ? 0.3 * l + 0.7 * next : 0.5 * (l + next);
    l = next;
  }
  return e0;
}

double life_table_e0(const Vector& qx) { return life_table_e0(std::span<const double>(qx.data(), static_cast<std::size_t>(qx.size()))); }

Vector survivorship(const Vector& qx) {
  Vector l(qx.size());
  double cur = 1.0;
  for (Index a = 0; a < qx.size(); ++a) {
    if (!(qx[a] >= 0.0 && qx[a] <= 1.0)) fail(ErrorKind::DomainError, "qx outside [0, 1]");
    l[a] = cur;
    cur *= 1.0 - qx[a];
  }
  return l;
}

SexE0 schedule_e0(const Matrix& logit_qx) {
  if (logit_qx.rows() != kSexes) fail(ErrorKind::ShapeMismatch, "schedule must have two sex rows");
  const Vector qf = logit_qx.row(0).transpose().unaryExpr([](double x) { return expit(x); });
  const Vector qm = logit_qx.row(1).transpose().unaryExpr([](double x) { return expit(x); });
  return {life_table_e0(qf), life_table_e0(qm)};
}

}  // namespace mortflow
