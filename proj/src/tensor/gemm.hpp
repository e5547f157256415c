#pragma once

#include <cstddef>

namespace twofold::detail {

// Row-major single-precision matrix kernels. All accumulate into C.
//   gemm_nn: C[M,N] += A[M,K] * B[K,N]
//   gemm_tn: C[K,N] += A[M,K]^T * B[M,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c);

}  // namespace twofold::detail
