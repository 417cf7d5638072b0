#pragma once
// Dense float kernels behind the convolution engine.
//
// Each kernel has a portable scalar reference and, where the CPU supports
// them, AVX2/FMA and AVX-512 variants. The widest supported variant is chosen
// once at startup; WEAKSEG_SIMD=scalar|avx2|avx512 caps the choice.

#include <cstddef>
#include <string_view>

namespace weakseg::simd {

enum class Isa { scalar, avx2, avx512 };

std::string_view to_string(Isa isa) noexcept;

enum class Trans { no, yes };

// Row-major C(m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C.
// beta == 0 overwrites C without reading it.
using GemmFn = void (*)(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a,
                        int lda, const float* b, int ldb, float beta, float* c, int ldc);
// out[i] = max(in[i], 0)
using ReluForwardFn = void (*)(const float* in, float* out, std::size_t n);
// grad_in[i] = out[i] > 0 ? grad_out[i] : 0
using ReluBackwardFn = void (*)(const float* out, const float* grad_out, float* grad_in,
                                std::size_t n);
// y[i] += a * x[i]
using AxpyFn = void (*)(float a, const float* x, float* y, std::size_t n);
// g' = g + decay*w ; v = momentum*v + g' ; w -= rate*v
using SgdMomentumFn = void (*)(float* w, float* v, const float* g, std::size_t n, float rate,
                               float momentum, float decay);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  ReluForwardFn relu_forward;
  ReluBackwardFn relu_backward;
  AxpyFn axpy;
  SgdMomentumFn sgd_momentum;
};

bool cpu_supports(Isa isa) noexcept;

// Table for a specific instruction set; throws if the CPU lacks it.
const KernelTable& kernels_for(Isa isa);

// Table picked at startup (probe + WEAKSEG_SIMD override).
const KernelTable& active_kernels() noexcept;

namespace detail {
const KernelTable& scalar_table() noexcept;
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table() noexcept;
const KernelTable& avx512_table() noexcept;
#endif
}  // namespace detail

}  // namespace weakseg::simd
