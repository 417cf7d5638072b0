// Compiled with -mavx512f; only reached after a runtime CPU probe.

#include <immintrin.h>

#include <cstddef>

#include "gemm_blocked.hpp"
#include "weakseg/simd/kernels.hpp"

namespace weakseg::simd::detail {

namespace {

constexpr int kMr = 8;
constexpr int kNr = 32;

// 8x32 register block: 16 zmm accumulators.
void micro_kernel(int kc, const float* a, std::ptrdiff_t a_rs, std::ptrdiff_t a_ks,
                  const float* b, std::ptrdiff_t b_ks, float* c, int ldc, float alpha, float beta,
                  int mr, int nr) {
  __m512 acc0[kMr];
  __m512 acc1[kMr];
#pragma GCC unroll 8
  for (int r = 0; r < kMr; ++r) {
    acc0[r] = _mm512_setzero_ps();
    acc1[r] = _mm512_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const std::ptrdiff_t off = p * a_ks;
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
#pragma GCC unroll 8
    for (int r = 0; r < kMr; ++r) {
      const __m512 av = _mm512_set1_ps(a[r * a_rs + off]);
      acc0[r] = _mm512_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm512_fmadd_ps(av, b1, acc1[r]);
    }
    b += b_ks;
  }

  const __m512 va = _mm512_set1_ps(alpha);
  const __m512 vb = _mm512_set1_ps(beta);
  const __mmask16 lo_mask = nr >= 16 ? __mmask16(0xFFFF) : __mmask16((1u << nr) - 1u);
  const __mmask16 hi_mask =
      nr >= 32 ? __mmask16(0xFFFF) : (nr <= 16 ? __mmask16(0) : __mmask16((1u << (nr - 16)) - 1u));
#pragma GCC unroll 8
  for (int r = 0; r < kMr; ++r) {
    if (r >= mr) break;
    float* crow = c + static_cast<std::size_t>(r) * ldc;
    __m512 lo = _mm512_mul_ps(va, acc0[r]);
    __m512 hi = _mm512_mul_ps(va, acc1[r]);
    if (beta != 0.0f) {
      lo = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(lo_mask, crow), lo);
      hi = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(hi_mask, crow + 16), hi);
    }
    _mm512_mask_storeu_ps(crow, lo_mask, lo);
    _mm512_mask_storeu_ps(crow + 16, hi_mask, hi);
  }
}

void gemm_avx512(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_blocked<kMr, kNr, 256, 128>(&micro_kernel, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c,
                                   ldc);
}

// Element-wise kernels round exactly like the scalar reference (no fused ops).

void relu_forward_avx512(const float* in, float* out, std::size_t n) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(out + i, _mm512_max_ps(_mm512_loadu_ps(in + i), zero));
  for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward_avx512(const float* out, const float* grad_out, float* grad_in, std::size_t n) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __mmask16 mask = _mm512_cmp_ps_mask(_mm512_loadu_ps(out + i), zero, _CMP_GT_OQ);
    _mm512_storeu_ps(grad_in + i, _mm512_maskz_mov_ps(mask, _mm512_loadu_ps(grad_out + i)));
  }
  for (; i < n; ++i) grad_in[i] = out[i] > 0.0f ? grad_out[i] : 0.0f;
}

void axpy_avx512(float a, const float* x, float* y, std::size_t n) {
  const __m512 va = _mm512_set1_ps(a);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 prod = _mm512_mul_ps(va, _mm512_loadu_ps(x + i));
    _mm512_storeu_ps(y + i, _mm512_add_ps(_mm512_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void sgd_momentum_avx512(float* w, float* v, const float* g, std::size_t n, float rate,
                         float momentum, float decay) {
  const __m512 vrate = _mm512_set1_ps(rate);
  const __m512 vmom = _mm512_set1_ps(momentum);
  const __m512 vdecay = _mm512_set1_ps(decay);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 wi = _mm512_loadu_ps(w + i);
    const __m512 gi = _mm512_add_ps(_mm512_loadu_ps(g + i), _mm512_mul_ps(vdecay, wi));
    const __m512 vi = _mm512_add_ps(_mm512_mul_ps(vmom, _mm512_loadu_ps(v + i)), gi);
    _mm512_storeu_ps(v + i, vi);
    _mm512_storeu_ps(w + i, _mm512_sub_ps(wi, _mm512_mul_ps(vrate, vi)));
  }
  for (; i < n; ++i) {
    const float gi = g[i] + decay * w[i];
    v[i] = momentum * v[i] + gi;
    w[i] = w[i] - rate * v[i];
  }
}

}  // namespace

const KernelTable& avx512_table() noexcept {
  static const KernelTable table{
      Isa::avx512,        &gemm_avx512, &relu_forward_avx512, &relu_backward_avx512,
      &axpy_avx512,       &sgd_momentum_avx512,
  };
  return table;
}

}  // namespace weakseg::simd::detail
