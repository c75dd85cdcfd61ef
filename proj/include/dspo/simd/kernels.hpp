#pragma once
// Dense double-precision inner loops behind the autodiff tensor ops.
//
// Every kernel has a portable scalar reference and, where the host supports
// it, a vectorized variant (AVX2+FMA on x86-64, NEON on AArch64). The active
// variant is chosen once at runtime from CPUID and may be pinned with
// set_isa() (tests do this to compare the two paths) or the DSPO_ISA
// environment variable ("scalar", "avx2", "neon").
//
// All matrices are row-major with explicit leading dimensions. The gemm_*
// kernels accumulate into C; callers zero C first when they want C = A*B.

#include <cstddef>
#include <string_view>

namespace dspo::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

// Best variant this binary and CPU can run.
Isa detect_isa();
Isa active_isa();
// Throws dspo::Error(Config) if the host cannot run `isa`.
void set_isa(Isa isa);
bool isa_supported(Isa isa);

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // C(MxN) += A(MxK) * B(KxN)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(MxN) += A(MxK) * B(NxK)^T. Rows of C may overlap (ldc < N); each
  // element is updated exactly once, which conv1d's input gradient relies on.
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C(MxN) += A(KxM)^T * B(KxN)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
};

const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

namespace scalar {
extern const KernelTable table;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable table;
}
#endif
#if defined(__aarch64__)
namespace neon {
extern const KernelTable table;
}
#endif

inline double dot(const double* x, const double* y, std::size_t n) {
  return kernels().dot(x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  kernels().axpy(alpha, x, y, n);
}
inline double sum(const double* x, std::size_t n) { return kernels().sum(x, n); }

}  // namespace dspo::simd
