#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace mortflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense 4-way array stored row-major: the last index varies fastest.
class Tensor4 {
 public:
  using Dims = std::array<Index, 4>;

  Tensor4() = default;
  explicit Tensor4(Dims dims, double fill = 0.0);

  const Dims& dims() const noexcept { return dims_; }
  Index dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  Index size() const noexcept { return static_cast<Index>(data_.size()); }

  double& operator()(Index i, Index j, Index k, Index l) { return data_[offset(i, j, k, l)]; }
  double operator()(Index i, Index j, Index k, Index l) const { return data_[offset(i, j, k, l)]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Mode-n matricization: row = index along `mode`, column = row-major
  /// position over the remaining modes taken in ascending order.
  Matrix unfold(int mode) const;

  /// Mode-n product: contracts `mode` with the columns of `m`, so the
  /// result has m.rows() entries along `mode`.
  Tensor4 mode_product(int mode, const Matrix& m) const;

  double frobenius_norm() const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  std::size_t offset(Index i, Index j, Index k, Index l) const {
    return static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l);
  }

  Dims dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

}  // namespace mortflow
