#pragma once
// Precision-dispatched primitives: float routes through the runtime-selected
// SIMD table, double through the scalar reference loops.

#include <cstddef>

#include "weakseg/simd/kernels.hpp"
#include "weakseg/simd/reference.hpp"

namespace weakseg::fcn {

using simd::Trans;

template <class T>
struct Ops;

template <>
struct Ops<float> {
  static void gemm(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                   const float* b, int ldb, float beta, float* c, int ldc) {
    simd::active_kernels().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
  static void relu_forward(const float* in, float* out, std::size_t n) {
    simd::active_kernels().relu_forward(in, out, n);
  }
  static void relu_backward(const float* out, const float* g, float* gi, std::size_t n) {
    simd::active_kernels().relu_backward(out, g, gi, n);
  }
  static void axpy(float a, const float* x, float* y, std::size_t n) {
    simd::active_kernels().axpy(a, x, y, n);
  }
  static void sgd_momentum(float* w, float* v, const float* g, std::size_t n, float rate,
                           float momentum, float decay) {
    simd::active_kernels().sgd_momentum(w, v, g, n, rate, momentum, decay);
  }
};

template <>
struct Ops<double> {
  static void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda,
                   const double* b, int ldb, double beta, double* c, int ldc) {
    simd::reference::gemm<double>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
  static void relu_forward(const double* in, double* out, std::size_t n) {
    simd::reference::relu_forward<double>(in, out, n);
  }
  static void relu_backward(const double* out, const double* g, double* gi, std::size_t n) {
    simd::reference::relu_backward<double>(out, g, gi, n);
  }
  static void axpy(double a, const double* x, double* y, std::size_t n) {
    simd::reference::axpy<double>(a, x, y, n);
  }
  static void sgd_momentum(double* w, double* v, const double* g, std::size_t n, double rate,
                           double momentum, double decay) {
    simd::reference::sgd_momentum<double>(w, v, g, n, rate, momentum, decay);
  }
};

// Column matrix for output rows [oy0, oy1): row index (ch*K + ky)*K + kx,
// column (oy - oy0)*out_w + ox, leading dimension ld. Out-of-image taps are 0.
template <class T>
void im2col(const T* src, int channels, int h, int w, int kernel, int stride, int pad, int out_w,
            int oy0, int oy1, T* col, std::size_t ld);

// Adjoint of im2col: accumulates columns back into the (channels, h, w) image.
template <class T>
void col2im(const T* col, std::size_t ld, int channels, int h, int w, int kernel, int stride,
            int pad, int out_w, int oy0, int oy1, T* dst);

// Leading dimension for column buffers: padded off power-of-two strides so
// rows do not alias in L1.
inline std::size_t padded_ld(std::size_t cols) { return (cols + 15) / 16 * 16 + 16; }

}  // namespace weakseg::fcn
