#include "mortflow/core_pca.hpp"

#include <cmath>

#include "mortflow/error.hpp"
#include "mortflow/life_table.hpp"

namespace mortflow {

Vector vectorize(const EffectiveCore& g) {
  Vector v(g.size());
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) v[i * g.cols() + j] = g(i, j);
  }
  return v;
}

EffectiveCore reshape_core(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) fail(ErrorKind::ShapeMismatch, "vector length does not match core shape");
  EffectiveCore g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) g(i, j) = v[i * cols + j];
  }
  return g;
}

CorePCA fit_pca(const Matrix& vectors, Index core_rows, Index core_cols, Index components,
                const std::optional<Vector>& level) {
  const Index n = vectors.rows();
  const Index d = vectors.cols();
  if (d != core_rows * core_cols) fail(ErrorKind::ShapeMismatch, "vector length does not match core shape");
  if (components < 1) fail(ErrorKind::ConfigError, "at least one principal component is required");
  if (components > d) {
    fail(ErrorKind::InsufficientData, "requested " + std::to_string(components) + " components from " +
                                          std::to_string(d) + "-dimensional cores");
  }
  if (n < components) {
    fail(ErrorKind::InsufficientData, "only " + std::to_string(n) + " observations for " +
                                          std::to_string(components) + " components");
  }

  CorePCA pca;
  pca.core_rows = core_rows;
  pca.core_cols = core_cols;
  pca.mean = vectors.colwise().mean().transpose();
  const Matrix centered = vectors.rowwise() - pca.mean.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double total = sv.squaredNorm();
  pca.loadings = svd.matrixV().leftCols(components).transpose();
  pca.explained_variance = Vector::Zero(components);
  for (Index k = 0; k < components && k < sv.size(); ++k) {
    pca.explained_variance[k] = total > 0.0 ? sv[k] * sv[k] / total : 0.0;
  }

  for (Index k = 0; k < components; ++k) {
    Index arg = 0;
    pca.loadings.row(k).cwiseAbs().maxCoeff(&arg);
    if (pca.loadings(k, arg) < 0.0) pca.loadings.row(k) *= -1.0;
  }

  if (level) {
    if (level->size() != n) fail(ErrorKind::ShapeMismatch, "one level value per observation is required");
    const Vector s1 = centered * pca.loadings.row(0).transpose();
    const Vector e = level->array() - level->mean();
    if (s1.dot(e) > 0.0) pca.loadings.row(0) *= -1.0;
  }
  return pca;
}

CorePCA fit_core_pca(const TuckerModel& model, const MortalityTensor::Mask& mask, Index components) {
  const Index r1 = model.core.dim(0), r2 = model.core.dim(1);
  const Index n = mask.count();
  Matrix vectors(n, r1 * r2);
  Vector e0(n);
  Index row = 0;
  for (Index c = 0; c < mask.rows(); ++c) {
    for (Index t = 0; t < mask.cols(); ++t) {
      if (!mask(c, t)) continue;
      const EffectiveCore g = effective_core(model, c, t);
      vectors.row(row) = vectorize(g).transpose();
      e0[row] = schedule_e0(reconstruct_schedule(model, g)).average();
      ++row;
    }
  }
  return fit_pca(vectors, r1, r2, components, e0);
}

ScoreVector scores(const CorePCA& pca, const EffectiveCore& g) {
  if (g.rows() != pca.core_rows || g.cols() != pca.core_cols) {
    fail(ErrorKind::ShapeMismatch, "effective core shape does not match the PCA");
  }
  return pca.loadings * (vectorize(g) - pca.mean);
}

EffectiveCore inverse(const CorePCA& pca, const ScoreVector& s) {
  if (s.size() != pca.components()) fail(ErrorKind::ShapeMismatch, "score vector length does not match the PCA");
  return reshape_core(pca.mean + pca.loadings.transpose() * s, pca.core_rows, pca.core_cols);
}

Matrix jumpoff_residual(const TuckerModel& model, const CorePCA& pca, const EffectiveCore& g) {
  return reconstruct_schedule(model, g) - reconstruct_schedule(model, inverse(pca, scores(pca, g)));
}

Matrix jumpoff_residual(const TuckerModel& model, const CorePCA& pca, const MortalityTensor::Mask& mask, Index c,
                        Index t_last) {
  if (c < 0 || c >= mask.rows() || t_last < 0 || t_last >= mask.cols()) {
    fail(ErrorKind::IndexError, "origin index out of range");
  }
  if (!mask(c, t_last)) fail(ErrorKind::MissingData, "forecast origin is not an observed country-year");
  return jumpoff_residual(model, pca, effective_core(model, c, t_last));
}

}  // namespace mortflow
