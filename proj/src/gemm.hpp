#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace afgan::detail {

// C (m x n) = op(A) (m x k) . op(B) (k x n), all row-major and contiguous.
// With accumulate, the product is added to C instead of overwriting it.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b,
          T* c, bool accumulate = false) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> ma(a, trans_a ? k : m, trans_a ? m : k);
  Eigen::Map<const Mat> mb(b, trans_b ? n : k, trans_b ? k : n);
  Eigen::Map<Mat> mc(c, m, n);
  if (!accumulate) mc.setZero();
  if (trans_a && trans_b) {
    mc.noalias() += ma.transpose() * mb.transpose();
  } else if (trans_a) {
    mc.noalias() += ma.transpose() * mb;
  } else if (trans_b) {
    mc.noalias() += ma * mb.transpose();
  } else {
    mc.noalias() += ma * mb;
  }
}

}  // namespace afgan::detail
