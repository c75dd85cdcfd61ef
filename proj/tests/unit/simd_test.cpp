#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dspo/error.hpp"
#include "dspo/simd/kernels.hpp"

namespace {

using dspo::simd::Isa;

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!dspo::simd::isa_supported(dspo::simd::detect_isa()) ||
        dspo::simd::detect_isa() == Isa::Scalar) {
      GTEST_SKIP() << "no vector ISA on this host";
    }
  }
  const dspo::simd::KernelTable& ref = dspo::simd::kernels_for(Isa::Scalar);
  const dspo::simd::KernelTable& vec = dspo::simd::kernels_for(dspo::simd::detect_isa());
};

TEST_F(SimdEquivalence, DotSumAxpyMatchScalarOnAllTailLengths) {
  std::mt19937_64 rng(7);
  for (std::size_t n = 0; n < 70; ++n) {
    auto x = random_vector(rng, n);
    auto y = random_vector(rng, n);
    EXPECT_LT(rel_diff(ref.dot(x.data(), y.data(), n), vec.dot(x.data(), y.data(), n)), 1e-13) << n;
    EXPECT_LT(rel_diff(ref.sum(x.data(), n), vec.sum(x.data(), n)), 1e-13) << n;
    auto y1 = y;
    auto y2 = y;
    ref.axpy(0.37, x.data(), y1.data(), n);
    vec.axpy(0.37, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_LT(rel_diff(y1[i], y2[i]), 1e-15);
  }
}

TEST_F(SimdEquivalence, GemmVariantsMatchScalar) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 37);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
    auto a = random_vector(rng, m * k);
    auto b = random_vector(rng, k * n);
    auto c0 = random_vector(rng, m * n);
    using Fn = decltype(ref.gemm_nn);
    struct Case {
      Fn r;
      Fn v;
      std::size_t lda, ldb;
    };
    // nn: A m x k, B k x n; nt: A m x k, B n x k; tn: A k x m, B k x n
    for (const Case& c : {Case{ref.gemm_nn, vec.gemm_nn, k, n}, Case{ref.gemm_nt, vec.gemm_nt, k, k},
                          Case{ref.gemm_tn, vec.gemm_tn, m, n}}) {
      auto c1 = c0;
      auto c2 = c0;
      c.r(m, n, k, a.data(), c.lda, b.data(), c.ldb, c1.data(), n);
      c.v(m, n, k, a.data(), c.lda, b.data(), c.ldb, c2.data(), n);
      for (std::size_t i = 0; i < m * n; ++i) ASSERT_LT(rel_diff(c1[i], c2[i]), 1e-12);
    }
  }
}

TEST(SimdDispatch, ScalarIsAlwaysAvailableAndSelectable) {
  const Isa before = dspo::simd::active_isa();
  dspo::simd::set_isa(Isa::Scalar);
  EXPECT_EQ(dspo::simd::active_isa(), Isa::Scalar);
  double x[3] = {1, 2, 3};
  EXPECT_EQ(dspo::simd::dot(x, x, 3), 14.0);
  dspo::simd::set_isa(before);
  EXPECT_EQ(dspo::simd::active_isa(), before);
}

TEST(SimdDispatch, UnsupportedVariantIsRejected) {
  for (Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (!dspo::simd::isa_supported(isa)) EXPECT_THROW(dspo::simd::set_isa(isa), dspo::Error);
  }
}

}  // namespace
