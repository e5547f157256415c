#include "gemm.hpp"

#include <algorithm>

namespace twofold::detail {

namespace {

constexpr std::size_t kBlockK = 128;

inline void axpy4(std::size_t n, const float* b, float a0, float a1, float a2, float a3,
                  float* __restrict c0, float* __restrict c1, float* __restrict c2,
                  float* __restrict c3) {
  for (std::size_t j = 0; j < n; ++j) {
    const float bv = b[j];
    c0[j] += a0 * bv;
    c1[j] += a1 * bv;
    c2[j] += a2 * bv;
    c3[j] += a3 * bv;
  }
}

inline void axpy1(std::size_t n, const float* __restrict b, float a, float* __restrict c) {
  for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c) {
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t k1 = std::min(k, k0 + kBlockK);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const float* a0 = a + (i + 0) * k;
      const float* a1 = a + (i + 1) * k;
      const float* a2 = a + (i + 2) * k;
      const float* a3 = a + (i + 3) * k;
      float* c0 = c + (i + 0) * n;
      float* c1 = c + (i + 1) * n;
      float* c2 = c + (i + 2) * n;
      float* c3 = c + (i + 3) * n;
      for (std::size_t p = k0; p < k1; ++p) {
        axpy4(n, b + p * n, a0[p], a1[p], a2[p], a3[p], c0, c1, c2, c3);
      }
    }
    for (; i < m; ++i) {
      const float* ai = a + i * k;
      float* ci = c + i * n;
      for (std::size_t p = k0; p < k1; ++p) axpy1(n, b + p * n, ai[p], ci);
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c) {
  // Rows of C are indexed by the K axis of A; each row of A contributes an
  // outer product a_row^T * b_row.
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) {
    const float* a0 = a + (r + 0) * k;
    const float* a1 = a + (r + 1) * k;
    const float* a2 = a + (r + 2) * k;
    const float* a3 = a + (r + 3) * k;
    const float* b0 = b + (r + 0) * n;
    const float* b1 = b + (r + 1) * n;
    const float* b2 = b + (r + 2) * n;
    const float* b3 = b + (r + 3) * n;
    for (std::size_t p = 0; p < k; ++p) {
      float* __restrict cp = c + p * n;
      const float x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        cp[j] += x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
      }
    }
  }
  for (; r < m; ++r) {
    const float* ar = a + r * k;
    const float* br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) axpy1(n, br, ar[p], c + p * n);
  }
}

}  // namespace twofold::detail
