// Compiled with -mavx2 -mfma; only reached after a runtime CPU probe.

#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>

#include "gemm_blocked.hpp"
#include "weakseg/simd/kernels.hpp"

namespace weakseg::simd::detail {

namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;

// 6x16 register block: 12 accumulators, 2 B loads and 6 A broadcasts per k step.
// Accumulators are named locals so they stay in registers across the k loop.
void micro_kernel(int kc, const float* a, std::ptrdiff_t a_rs, std::ptrdiff_t a_ks,
                  const float* b, std::ptrdiff_t b_ks, float* c, int ldc, float alpha, float beta,
                  int mr, int nr) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  const float* a0 = a;
  const float* a1 = a + a_rs;
  const float* a2 = a + 2 * a_rs;
  const float* a3 = a + 3 * a_rs;
  const float* a4 = a + 4 * a_rs;
  const float* a5 = a + 5 * a_rs;
  for (int p = 0; p < kc; ++p) {
    const std::ptrdiff_t off = p * a_ks;
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    __m256 av = _mm256_broadcast_ss(a0 + off);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a1 + off);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a2 + off);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a3 + off);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
    av = _mm256_broadcast_ss(a4 + off);
    c40 = _mm256_fmadd_ps(av, b0, c40);
    c41 = _mm256_fmadd_ps(av, b1, c41);
    av = _mm256_broadcast_ss(a5 + off);
    c50 = _mm256_fmadd_ps(av, b0, c50);
    c51 = _mm256_fmadd_ps(av, b1, c51);
    b += b_ks;
  }

  const __m256 va = _mm256_set1_ps(alpha);
  const __m256 acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                              {c30, c31}, {c40, c41}, {c50, c51}};
  if (mr == kMr && nr == kNr) {
    const __m256 vb = _mm256_set1_ps(beta);
    for (int r = 0; r < kMr; ++r) {
      float* crow = c + static_cast<std::size_t>(r) * ldc;
      __m256 lo = _mm256_mul_ps(va, acc[r][0]);
      __m256 hi = _mm256_mul_ps(va, acc[r][1]);
      if (beta != 0.0f) {
        lo = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow), lo);
        hi = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow + 8), hi);
      }
      _mm256_storeu_ps(crow, lo);
      _mm256_storeu_ps(crow + 8, hi);
    }
    return;
  }

  alignas(32) float tile[kMr][kNr];
  for (int r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile[r], _mm256_mul_ps(va, acc[r][0]));
    _mm256_store_ps(tile[r] + 8, _mm256_mul_ps(va, acc[r][1]));
  }
  for (int r = 0; r < mr; ++r) {
    float* crow = c + static_cast<std::size_t>(r) * ldc;
    for (int j = 0; j < nr; ++j) {
      crow[j] = beta == 0.0f ? tile[r][j] : tile[r][j] + beta * crow[j];
    }
  }
}

void gemm_avx2(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
               const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_blocked<kMr, kNr, 256, 96>(&micro_kernel, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c,
                                  ldc);
}

// The element-wise kernels below use separate multiply and add so they round
// exactly like the scalar reference.

void relu_forward_avx2(const float* in, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(in + i), zero));
  for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward_avx2(const float* out, const float* grad_out, float* grad_in, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(out + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(grad_in + i, _mm256_and_ps(mask, _mm256_loadu_ps(grad_out + i)));
  }
  for (; i < n; ++i) grad_in[i] = out[i] > 0.0f ? grad_out[i] : 0.0f;
}

void axpy_avx2(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void sgd_momentum_avx2(float* w, float* v, const float* g, std::size_t n, float rate,
                       float momentum, float decay) {
  const __m256 vrate = _mm256_set1_ps(rate);
  const __m256 vmom = _mm256_set1_ps(momentum);
  const __m256 vdecay = _mm256_set1_ps(decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wi = _mm256_loadu_ps(w + i);
    const __m256 gi = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(vdecay, wi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vmom, _mm256_loadu_ps(v + i)), gi);
    _mm256_storeu_ps(v + i, vi);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(wi, _mm256_mul_ps(vrate, vi)));
  }
  for (; i < n; ++i) {
    const float gi = g[i] + decay * w[i];
    v[i] = momentum * v[i] + gi;
    w[i] = w[i] - rate * v[i];
  }
}

}  // namespace

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{
      Isa::avx2, &gemm_avx2, &relu_forward_avx2, &relu_backward_avx2, &axpy_avx2, &sgd_momentum_avx2,
  };
  return table;
}

}  // namespace weakseg::simd::detail
