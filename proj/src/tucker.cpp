#include "mortflow/tucker.hpp"

#include <cmath>

#include "mortflow/error.hpp"

namespace mortflow {

namespace {

void fix_signs(Matrix& u) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0.0) u.col(j) *= -1.0;
  }
}

/// Leading left singular vectors of a matricization.
Matrix leading_left_vectors(const Matrix& unfolded, Index rank) {
  Eigen::BDCSVD<Matrix> svd;
  if (unfolded.cols() >= unfolded.rows()) {
    svd.compute(unfolded, Eigen::ComputeThinU);
  } else {
    svd.compute(unfolded, Eigen::ComputeFullU);
  }
  Matrix u = svd.matrixU().leftCols(rank);
  fix_signs(u);
  return u;
}

void check_ranks(const Ranks& ranks, const Tensor4::Dims& dims) {
  static constexpr const char* names[] = {"sex", "age", "country", "year"};
  for (int m = 0; m < 4; ++m) {
    if (ranks[m] < 1) fail(ErrorKind::RankError, std::string(names[m]) + " rank must be at least 1");
    if (ranks[m] > dims[static_cast<std::size_t>(m)]) {
      fail(ErrorKind::RankError, std::string(names[m]) + " rank " + std::to_string(ranks[m]) +
                                     " exceeds mode size " + std::to_string(dims[static_cast<std::size_t>(m)]));
    }
  }
}

}  // namespace

Ranks clip_ranks(const Ranks& ranks, const Tensor4::Dims& dims) {
  Ranks out = ranks;
  for (std::size_t m = 0; m < 4; ++m) out.r[m] = std::max<Index>(1, std::min(out.r[m], dims[m]));
  return out;
}

TuckerModel hosvd(const Tensor4& tensor, const Ranks& ranks) {
  check_ranks(ranks, tensor.dims());
  for (double v : tensor.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::DataError, "non-finite entry in tensor passed to HOSVD");
  }
  TuckerModel model;
  model.ranks = ranks;
  for (int m = 0; m < 4; ++m) model.factors[static_cast<std::size_t>(m)] = leading_left_vectors(tensor.unfold(m), ranks[m]);

  Tensor4 core = tensor;
  for (int m = 0; m < 4; ++m) core = core.mode_product(m, model.factors[static_cast<std::size_t>(m)].transpose());
  model.core = std::move(core);
  return model;
}

TuckerModel hosvd(const MortalityTensor& tensor, const Ranks& ranks) {
  check_ranks(ranks, tensor.values().dims());
  const Index S = tensor.sexes(), A = tensor.ages(), C = tensor.num_countries(), T = tensor.num_years();
  if (tensor.observed_count() == 0) fail(ErrorKind::DataError, "tensor has no observed country-years");

  Matrix mean = Matrix::Zero(S, A);
  for (Index c = 0; c < C; ++c) {
    for (Index t = 0; t < T; ++t) {
      if (tensor.observed(c, t)) mean += tensor.slice(c, t);
    }
  }
  mean /= static_cast<double>(tensor.observed_count());

  Tensor4 filled = tensor.values();
  for (Index c = 0; c < C; ++c) {
    for (Index t = 0; t < T; ++t) {
      if (tensor.observed(c, t)) continue;
      for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) filled(s, a, c, t) = mean(s, a);
      }
    }
  }

  TuckerModel model = hosvd(filled, ranks);
  model.countries = tensor.countries();
  model.years = tensor.years();
  return model;
}

Tensor4 reconstruct_tensor(const TuckerModel& model) {
  Tensor4 out = model.core;
  for (int m = 0; m < 4; ++m) out = out.mode_product(m, model.factors[static_cast<std::size_t>(m)]);
  return out;
}

EffectiveCore effective_core(const TuckerModel& model, Index c, Index t) {
  const Matrix& C = model.country_factor();
  const Matrix& T = model.year_factor();
  if (c < 0 || c >= C.rows()) fail(ErrorKind::IndexError, "country index out of range");
  if (t < 0 || t >= T.rows()) fail(ErrorKind::IndexError, "year index out of range");
  const auto& dims = model.core.dims();
  EffectiveCore g = EffectiveCore::Zero(dims[0], dims[1]);
  for (Index i = 0; i < dims[0]; ++i) {
    for (Index j = 0; j < dims[1]; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < dims[2]; ++k) {
        double inner = 0.0;
        for (Index l = 0; l < dims[3]; ++l) inner += model.core(i, j, k, l) * T(t, l);
        acc += inner * C(c, k);
      }
      g(i, j) = acc;
    }
  }
  return g;
}

Matrix reconstruct_schedule(const TuckerModel& model, const EffectiveCore& g) {
  if (g.rows() != model.sex_factor().cols() || g.cols() != model.age_factor().cols()) {
    fail(ErrorKind::ShapeMismatch, "effective core shape does not match model ranks");
  }
  return model.sex_factor() * g * model.age_factor().transpose();
}

EffectiveCore project_schedule(const TuckerModel& model, const Matrix& z) {
  if (z.rows() != model.sex_factor().rows() || z.cols() != model.age_factor().rows()) {
    fail(ErrorKind::ShapeMismatch, "schedule shape does not match model (sexes x ages)");
  }
  if (!z.allFinite()) fail(ErrorKind::DataError, "schedule contains non-finite values");
  return model.sex_factor().transpose() * z * model.age_factor();
}

}  // namespace mortflow
