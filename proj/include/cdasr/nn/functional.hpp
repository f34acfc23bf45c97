#pragma once

#include "cdasr/common.hpp"

#include <algorithm>
#include <cmath>

namespace cdasr::nn {

template <typename Scalar>
inline Scalar log_add(Scalar a, Scalar b) {
  if (a == -std::numeric_limits<Scalar>::infinity()) return b;
  if (b == -std::numeric_limits<Scalar>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Column-wise log-softmax.
template <typename Derived>
Mat<typename Derived::Scalar> log_softmax_cols(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Scalar m = logits.col(j).maxCoeff();
    Scalar lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

template <typename Derived>
Vec<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Scalar m = v.maxCoeff();
  Vec<Scalar> e = (v.array() - m).exp();
  return e / e.sum();
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1) / (Scalar(1) + (-x).exp());
}

}  // namespace cdasr::nn
