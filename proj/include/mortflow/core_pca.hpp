#pragma once

#include <optional>

#include "mortflow/data_model.hpp"
#include "mortflow/tucker.hpp"

namespace mortflow {

/// Score vector; component 0 is the level score s1 (larger = higher mortality).
using ScoreVector = Vector;

struct CorePCA {
  Vector mean;                // g_bar, length r1*r2
  Matrix loadings;            // N x (r1*r2), orthonormal rows
  Vector explained_variance;  // fraction of centered variance per component
  Index core_rows = 0;        // r1
  Index core_cols = 0;        // r2

  Index components() const { return loadings.rows(); }
};

/// Row-major flattening of an r1 x r2 core.
Vector vectorize(const EffectiveCore& g);
EffectiveCore reshape_core(const Vector& v, Index rows, Index cols);

/// PCA (via SVD of the centered rows) of the given vectorized cores. When
/// `level` is supplied (one e0 per row), PC1 is oriented so that its score
/// correlates negatively with it.
CorePCA fit_pca(const Matrix& vectors, Index core_rows, Index core_cols, Index components,
                const std::optional<Vector>& level = std::nullopt);

/// PCA of vec(G_ct) over every observed (c, t); PC1 oriented against the
/// e0 of the Tucker reconstruction.
CorePCA fit_core_pca(const TuckerModel& model, const MortalityTensor::Mask& mask, Index components = 5);

ScoreVector scores(const CorePCA& pca, const EffectiveCore& g);
EffectiveCore inverse(const CorePCA& pca, const ScoreVector& s);

/// S (g - P g) A^T: the part of a core lost by the PCA truncation, in schedule space.
Matrix jumpoff_residual(const TuckerModel& model, const CorePCA& pca, const EffectiveCore& g);

/// Jump-off residual at an observed origin cell.
Matrix jumpoff_residual(const TuckerModel& model, const CorePCA& pca, const MortalityTensor::Mask& mask, Index c,
                        Index t_last);

}  // namespace mortflow
