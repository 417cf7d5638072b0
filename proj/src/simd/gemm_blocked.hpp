#pragma once
// Cache-blocked GEMM driver shared by the vector kernels. Included from
// ISA-specific translation units only; everything lives in an unnamed
// namespace so each unit keeps its own copy compiled for its own ISA.
//
// Operands are read in place whenever the micro-kernel can stream them:
// A(r, p) = a[r * a_rs + p * a_ks] covers both A and A^T, and B rows are
// read contiguously for B. Only B^T blocks and ragged edge tiles are copied.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <memory>

#include "weakseg/simd/kernels.hpp"

namespace weakseg::simd::detail {
namespace {

struct FreeDeleter {
  void operator()(float* p) const noexcept { std::free(p); }
};
using ScratchBuffer = std::unique_ptr<float[], FreeDeleter>;

inline ScratchBuffer make_scratch(std::size_t count) {
  const std::size_t bytes = ((count * sizeof(float) + 63) / 64) * 64;
  return ScratchBuffer(static_cast<float*>(std::aligned_alloc(64, bytes)));
}

// Kernel contract:
//   kernel(kc, a, a_rs, a_ks, b, b_ks, c, ldc, alpha, beta, mr, nr)
// computes the full MR x NR product and stores the leading mr x nr block of
// alpha * A * B + beta * C (beta == 0 does not read C).
template <int MR, int NR, int KC, int MC, class Kernel>
void gemm_blocked(Kernel kernel, Trans ta, Trans tb, int m, int n, int k, float alpha,
                  const float* a, int lda, const float* b, int ldb, float beta, float* c,
                  int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0 || alpha == 0.0f) {
    for (int i = 0; i < m; ++i) {
      float* row = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) row[j] = beta == 0.0f ? 0.0f : beta * row[j];
    }
    return;
  }

  const int n_padded = (n + NR - 1) / NR * NR;
  thread_local ScratchBuffer packed_b;
  thread_local std::size_t packed_b_size = 0;
  thread_local ScratchBuffer edge_a = make_scratch(static_cast<std::size_t>(MR) * KC);
  thread_local ScratchBuffer edge_b = make_scratch(static_cast<std::size_t>(KC) * NR);

  const std::ptrdiff_t a_rs = ta == Trans::no ? lda : 1;
  const std::ptrdiff_t a_ks = ta == Trans::no ? 1 : lda;

  for (int p0 = 0; p0 < k; p0 += KC) {
    const int kc = std::min(KC, k - p0);
    const float block_beta = p0 == 0 ? beta : 1.0f;

    // B^T: pack the whole kc x n block once into NR-wide panels.
    if (tb == Trans::yes) {
      const std::size_t need = static_cast<std::size_t>(kc) * n_padded;
      if (need > packed_b_size) {
        packed_b = make_scratch(need);
        packed_b_size = need;
      }
      float* dst = packed_b.get();
      for (int jr = 0; jr < n; jr += NR) {
        const int cols = std::min(NR, n - jr);
        for (int p = 0; p < kc; ++p) {
          for (int col = 0; col < NR; ++col) {
            dst[col] = col < cols ? b[static_cast<std::size_t>(jr + col) * ldb + p0 + p] : 0.0f;
          }
          dst += NR;
        }
      }
    }

    for (int i0 = 0; i0 < m; i0 += MC) {
      const int mc = std::min(MC, m - i0);
      for (int jr = 0; jr < n; jr += NR) {
        const int nr = std::min(NR, n - jr);
        const float* bp;
        std::ptrdiff_t b_ks;
        if (tb == Trans::yes) {
          bp = packed_b.get() + static_cast<std::size_t>(jr) * kc;
          b_ks = NR;
        } else if (nr == NR) {
          bp = b + static_cast<std::size_t>(p0) * ldb + jr;
          b_ks = ldb;
        } else {
          float* dst = edge_b.get();
          for (int p = 0; p < kc; ++p) {
            const float* src = b + static_cast<std::size_t>(p0 + p) * ldb + jr;
            for (int col = 0; col < NR; ++col) dst[col] = col < nr ? src[col] : 0.0f;
            dst += NR;
          }
          bp = edge_b.get();
          b_ks = NR;
        }

        for (int ir = 0; ir < mc; ir += MR) {
          const int mr = std::min(MR, mc - ir);
          const int row0 = i0 + ir;
          float* cblk = c + static_cast<std::size_t>(row0) * ldc + jr;
          const float* ap = a + row0 * a_rs + static_cast<std::ptrdiff_t>(p0) * a_ks;
          if (mr == MR) {
            kernel(kc, ap, a_rs, a_ks, bp, b_ks, cblk, ldc, alpha, block_beta, mr, nr);
          } else {
            float* dst = edge_a.get();
            for (int r = 0; r < MR; ++r) {
              for (int p = 0; p < kc; ++p) {
                dst[static_cast<std::size_t>(r) * kc + p] =
                    r < mr ? ap[r * a_rs + static_cast<std::ptrdiff_t>(p) * a_ks] : 0.0f;
              }
            }
            kernel(kc, edge_a.get(), kc, 1, bp, b_ks, cblk, ldc, alpha, block_beta, mr, nr);
          }
        }
      }
    }
  }
}

}  // namespace
}  // namespace weakseg::simd::detail
