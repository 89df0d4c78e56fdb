#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace gaitcnn::kernels {

/// C[i][j] += sum_k A[i][k] * B[k][j] for row-major operands with leading
/// dimensions lda/ldb/ldc. Every element accumulates onto its existing value
/// with k strictly ascending, so results match a naive triple loop exactly.
inline void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                     std::size_t ldb, double* C, std::size_t ldc) {
  constexpr std::size_t MR = 4;
  constexpr std::size_t NR = 24;
  const std::size_t m_full = M - M % MR;
  const std::size_t n_full = N - N % NR;
  if (m_full > 0 && n_full > 0) {
    // Packed copies make the inner loop read both operands sequentially.
    thread_local std::vector<double> a_pack, b_pack;
    a_pack.resize(m_full * K);
    b_pack.resize(K * NR);
    for (std::size_t i0 = 0; i0 < m_full; i0 += MR) {
      double* dst = a_pack.data() + i0 * K;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t r = 0; r < MR; ++r) dst[k * MR + r] = A[(i0 + r) * lda + k];
    }
    for (std::size_t j0 = 0; j0 < n_full; j0 += NR) {
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < NR; ++c) b_pack[k * NR + c] = B[k * ldb + j0 + c];
      for (std::size_t i0 = 0; i0 < m_full; i0 += MR) {
        double acc[MR][NR];
        for (std::size_t r = 0; r < MR; ++r)
          for (std::size_t c = 0; c < NR; ++c) acc[r][c] = C[(i0 + r) * ldc + j0 + c];
        const double* a = a_pack.data() + i0 * K;
        const double* b = b_pack.data();
        for (std::size_t k = 0; k < K; ++k, a += MR, b += NR)
          for (std::size_t r = 0; r < MR; ++r)
            for (std::size_t c = 0; c < NR; ++c) acc[r][c] += a[r] * b[c];
        for (std::size_t r = 0; r < MR; ++r)
          for (std::size_t c = 0; c < NR; ++c) C[(i0 + r) * ldc + j0 + c] = acc[r][c];
      }
    }
  }
  if (n_full < N) {
    for (std::size_t i = 0; i < m_full; ++i) {
      double* c = C + i * ldc;
      const double* a = A + i * lda;
      for (std::size_t k = 0; k < K; ++k) {
        const double av = a[k];
        const double* b = B + k * ldb;
        for (std::size_t j = n_full; j < N; ++j) c[j] += av * b[j];
      }
    }
  }
  for (std::size_t i = m_full; i < M; ++i) {
    double* c = C + i * ldc;
    const double* a = A + i * lda;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// dst[c][r] = src[r][c] for a rows x cols row-major source.
inline void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t T = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += T)
    for (std::size_t c0 = 0; c0 < cols; c0 += T)
      for (std::size_t r = r0; r < std::min(rows, r0 + T); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + T); ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace gaitcnn::kernels
