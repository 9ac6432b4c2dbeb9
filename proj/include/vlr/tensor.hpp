#pragma once

#include <cblas.h>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vlr/common.hpp"

namespace vlr {

// Dense row-major tensor. Only 1-D and 2-D shapes are used in practice;
// helpers below assume 2-D where they talk about rows/cols.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel(), T{0});
  }
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T* row(int i) { return data.data() + static_cast<size_t>(i) * cols(); }
  const T* row(int i) const { return data.data() + static_cast<size_t>(i) * cols(); }

  T& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  const T& at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// C = alpha * op(A) * op(B) + beta * C, row-major. Thin wrappers so the rest
// of the code never spells out the cblas argument soup.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace vlr
