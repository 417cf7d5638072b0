#include "weakseg/simd/reference.hpp"

namespace weakseg::simd::detail {

namespace {

void gemm_scalar(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  reference::gemm<float>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      Isa::scalar,
      &gemm_scalar,
      &reference::relu_forward<float>,
      &reference::relu_backward<float>,
      &reference::axpy<float>,
      &reference::sgd_momentum<float>,
  };
  return table;
}

}  // namespace weakseg::simd::detail
