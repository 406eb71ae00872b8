#pragma once

#include <cstddef>

namespace specklenet::nn {

/// C = alpha·op(A)·op(B) + beta·C, row-major. Backed by BLAS with its own
/// threading disabled, so results do not depend on the worker count.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace specklenet::nn
