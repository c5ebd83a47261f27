#include "mortflow/tensor4.hpp"

#include <cmath>

#include "mortflow/error.hpp"

namespace mortflow {

namespace {

std::array<int, 3> other_modes(int mode) {
  std::array<int, 3> out{};
  int n = 0;
  for (int m = 0; m < 4; ++m) {
    if (m != mode) out[static_cast<std::size_t>(n++)] = m;
  }
  return out;
}

void check_mode(int mode) {
  if (mode < 0 || mode > 3) fail(ErrorKind::IndexError, "tensor mode must be in 0..3");
}

}  // namespace

Tensor4::Tensor4(Dims dims, double fill)
    : dims_(dims), data_(static_cast<std::size_t>(dims[0] * dims[1] * dims[2] * dims[3]), fill) {}

Matrix Tensor4::unfold(int mode) const {
  check_mode(mode);
  const auto rest = other_modes(mode);
  const Index d0 = dims_[rest[0]], d1 = dims_[rest[1]], d2 = dims_[rest[2]];
  Matrix out(dim(mode), d0 * d1 * d2);
  std::array<Index, 4> idx{};
  for (Index r = 0; r < dim(mode); ++r) {
    idx[mode] = r;
    Index col = 0;
    for (Index a = 0; a < d0; ++a) {
      idx[rest[0]] = a;
      for (Index b = 0; b < d1; ++b) {
        idx[rest[1]] = b;
        for (Index c = 0; c < d2; ++c, ++col) {
          idx[rest[2]] = c;
          out(r, col) = (*this)(idx[0], idx[1], idx[2], idx[3]);
        }
      }
    }
  }
  return out;
}

Tensor4 Tensor4::mode_product(int mode, const Matrix& m) const {
  check_mode(mode);
  if (m.cols() != dim(mode)) {
    fail(ErrorKind::ShapeMismatch, "mode product: matrix columns do not match tensor mode size");
  }
  Dims out_dims = dims_;
  out_dims[mode] = m.rows();
  Tensor4 out(out_dims, 0.0);

  const Matrix unfolded = unfold(mode);
  const Matrix product = m * unfolded;

  const auto rest = other_modes(mode);
  const Index d0 = dims_[rest[0]], d1 = dims_[rest[1]], d2 = dims_[rest[2]];
  std::array<Index, 4> idx{};
  for (Index r = 0; r < m.rows(); ++r) {
    idx[mode] = r;
    Index col = 0;
    for (Index a = 0; a < d0; ++a) {
      idx[rest[0]] = a;
      for (Index b = 0; b < d1; ++b) {
        idx[rest[1]] = b;
        for (Index c = 0; c < d2; ++c, ++col) {
          idx[rest[2]] = c;
          out(idx[0], idx[1], idx[2], idx[3]) = product(r, col);
        }
      }
    }
  }
  return out;
}

double Tensor4::frobenius_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace mortflow
