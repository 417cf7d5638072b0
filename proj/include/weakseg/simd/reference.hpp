#pragma once
// Scalar reference kernels. Templated so the double-precision build of the
// network (used for gradient checks) shares the exact same loops.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "weakseg/simd/kernels.hpp"

namespace weakseg::simd::reference {

template <class T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  std::vector<T> row(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T(0));
    for (int p = 0; p < k; ++p) {
      const T aip = ta == Trans::no ? a[static_cast<std::size_t>(i) * lda + p]
                                    : a[static_cast<std::size_t>(p) * lda + i];
      if (aip == T(0)) continue;
      if (tb == Trans::no) {
        const T* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) row[j] += aip * brow[j];
      } else {
        for (int j = 0; j < n; ++j) row[j] += aip * b[static_cast<std::size_t>(j) * ldb + p];
      }
    }
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == T(0)) {
      for (int j = 0; j < n; ++j) crow[j] = alpha * row[j];
    } else {
      for (int j = 0; j < n; ++j) crow[j] = alpha * row[j] + beta * crow[j];
    }
  }
}

template <class T>
void relu_forward(const T* in, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <class T>
void relu_backward(const T* out, const T* grad_out, T* grad_in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) grad_in[i] = out[i] > T(0) ? grad_out[i] : T(0);
}

template <class T>
void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

template <class T>
void sgd_momentum(T* w, T* v, const T* g, std::size_t n, T rate, T momentum, T decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i] + decay * w[i];
    v[i] = momentum * v[i] + gi;
    w[i] = w[i] - rate * v[i];
  }
}

}  // namespace weakseg::simd::reference
