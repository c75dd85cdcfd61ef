// AArch64 variant; NEON is architecturally guaranteed there, so no probing.
#if defined(__aarch64__)
#include <arm_neon.h>

#include "dspo/simd/kernels.hpp"

namespace dspo::simd::neon {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double total = vaddvq_f64(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

inline void gemm_rows(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      std::size_t a_row, std::size_t a_col, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * a_row;
    double* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      float64x2_t c0 = vld1q_f64(crow + j);
      float64x2_t c1 = vld1q_f64(crow + j + 2);
      float64x2_t c2 = vld1q_f64(crow + j + 4);
      float64x2_t c3 = vld1q_f64(crow + j + 6);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(ai[p * a_col]);
        const double* bp = b + p * ldb + j;
        c0 = vfmaq_f64(c0, av, vld1q_f64(bp));
        c1 = vfmaq_f64(c1, av, vld1q_f64(bp + 2));
        c2 = vfmaq_f64(c2, av, vld1q_f64(bp + 4));
        c3 = vfmaq_f64(c3, av, vld1q_f64(bp + 6));
      }
      vst1q_f64(crow + j, c0);
      vst1q_f64(crow + j + 2, c1);
      vst1q_f64(crow + j + 4, c2);
      vst1q_f64(crow + j + 6, c3);
    }
    for (; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += ai[p * a_col] * b[p * ldb + j];
      crow[j] = acc;
    }
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_rows(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot(a + i * lda, b + j * ldb, k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_rows(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

}  // namespace

const KernelTable table{dot, axpy, sum, gemm_nn, gemm_nt, gemm_tn};

}  // namespace dspo::simd::neon
#endif
