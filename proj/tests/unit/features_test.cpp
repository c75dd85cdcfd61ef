#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "dspo/error.hpp"
#include "dspo/features.hpp"

namespace {

using namespace dspo;
using namespace dspo::features;

std::vector<double> random_returns(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 0.01);
  std::vector<double> r(n);
  for (double& x : r) x = normal(rng);
  return r;
}

// Direct transcriptions used as oracles.
double oracle_rvar(const std::vector<double>& r) {
  double s = 0.0;
  for (double x : r) s += std::pow(x, 2);
  return s;
}
double oracle_rskew(const std::vector<double>& r) {
  double s = 0.0;
  for (double x : r) s += std::pow(x, 3);
  return std::sqrt(r.size()) * s / std::pow(oracle_rvar(r), 1.5);
}
double oracle_rkurt(const std::vector<double>& r) {
  double s = 0.0;
  for (double x : r) s += std::pow(x, 4);
  return r.size() * s / std::pow(oracle_rvar(r), 2);
}

TEST(RealizedMoments, HandExamples) {
  EXPECT_EQ(realized_variance(std::vector<double>{0.0, 0.0}), 0.0);
  EXPECT_NEAR(realized_variance(std::vector<double>{0.01, -0.01}), 0.0002, 1e-18);
  EXPECT_NEAR(*realized_skewness(std::vector<double>{0.02, -0.02, 0.01, -0.01}), 0.0, 1e-15);
  EXPECT_NEAR(*realized_skewness(std::vector<double>{0.03}), 1.0, 1e-15);
  EXPECT_NEAR(*realized_kurtosis(std::vector<double>{0.03}), 1.0, 1e-15);
  EXPECT_NEAR(*realized_kurtosis(std::vector<double>{0.02, 0.02}), 1.0, 1e-15);
  EXPECT_FALSE(realized_skewness(std::vector<double>{0.0, 0.0}).has_value());
  EXPECT_FALSE(realized_kurtosis(std::vector<double>{0.0}).has_value());
  EXPECT_THROW(realized_variance(std::vector<double>{}), Error);
}

TEST(RealizedMoments, MatchOracleOnRandomInputs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = random_returns(rng, 1 + rng() % 40);
    EXPECT_NEAR(realized_variance(r), oracle_rvar(r), 1e-15);
    EXPECT_NEAR(*realized_skewness(r), oracle_rskew(r), 1e-9);
    EXPECT_NEAR(*realized_kurtosis(r), oracle_rkurt(r), 1e-9);
    EXPECT_GE(*realized_kurtosis(r), 0.0);
  }
}

TEST(RealizedMoments, RatiosAreScaleInvariant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_returns(rng, 2 + rng() % 20);
    auto scaled = r;
    const double c = 0.1 + 10.0 * std::uniform_real_distribution<double>()(rng);
    for (double& x : scaled) x *= c;
    EXPECT_NEAR(*realized_skewness(scaled), *realized_skewness(r), 1e-9);
    EXPECT_NEAR(*realized_kurtosis(scaled), *realized_kurtosis(r), 1e-9);
    EXPECT_NEAR(*downside_beta(scaled), *downside_beta(r), 1e-12);
  }
}

TEST(DownsideBeta, ExtremesAndComplement) {
  EXPECT_EQ(*downside_beta(std::vector<double>{-0.01, -0.02}), 1.0);
  EXPECT_EQ(*downside_beta(std::vector<double>{0.01, 0.02}), 0.0);
  EXPECT_FALSE(downside_beta(std::vector<double>{0.0}).has_value());
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_returns(rng, 1 + rng() % 30);
    double up = 0.0;
    for (double x : r) {
      if (x >= 0.0) up += x * x;
    }
    const double beta = *downside_beta(r);
    EXPECT_GE(beta, 0.0);
    EXPECT_LE(beta, 1.0);
    EXPECT_NEAR(beta + up / realized_variance(r), 1.0, 1e-14);
  }
}

TEST(TrendStrength, HandExamplesAndScaleInvariance) {
  EXPECT_EQ(*trend_strength(std::vector<double>{1, 2, 3, 5}), 1.0);
  EXPECT_EQ(*trend_strength(std::vector<double>{5, 3, 2}), -1.0);
  EXPECT_EQ(*trend_strength(std::vector<double>{1, 2, 1}), 0.0);
  EXPECT_NEAR(*trend_strength(std::vector<double>{1, 3, 2}), 1.0 / 3.0, 1e-15);
  EXPECT_FALSE(trend_strength(std::vector<double>{4, 4, 4}).has_value());
  EXPECT_THROW(trend_strength(std::vector<double>{1}), Error);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(10, 20);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(2 + rng() % 20);
    for (double& x : p) x = u(rng);
    auto scaled = p;
    for (double& x : scaled) x *= 3.7;
    const double t = *trend_strength(p);
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
    EXPECT_NEAR(*trend_strength(scaled), t, 1e-12);
  }
}

TEST(FlowInRatio, HandExampleWithVolumeDeltas) {
  // closes 10, 11, 10.5; volumes 100, 200, 50; amount = volume * close
  FlowInput in{{100, 200, 50}, {10, 11, 10.5}, {1000, 2200, 525}, {}};
  const double num = (200 * 11 * 1.0 + 50 * 10.5 * 0.5) / 3725.0;
  const double den = 100 * 11 + 150 * 10.5;
  const auto r = flow_in_ratio(in);
  EXPECT_TRUE(r.oi_substituted);
  EXPECT_NEAR(*r.value, num / den, 1e-15);

  in.oi = {5, 7, 4};
  const auto with_oi = flow_in_ratio(in);
  EXPECT_FALSE(with_oi.oi_substituted);
  EXPECT_NEAR(*with_oi.value, num / (2 * 11 + 3 * 10.5), 1e-15);
}

TEST(FlowInRatio, UndefinedCasesAndInvariance) {
  EXPECT_FALSE(flow_in_ratio(FlowInput{{1}, {10}, {10}, {}}).value.has_value());
  EXPECT_FALSE(flow_in_ratio(FlowInput{{5, 5}, {10, 11}, {50, 55}, {}}).value.has_value());
  EXPECT_THROW(flow_in_ratio(FlowInput{{5, 5}, {10}, {50, 55}, {}}), Error);
  // price scale cancels; volume scale divides the ratio
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    FlowInput in;
    const std::size_t n = 2 + rng() % 10;
    for (std::size_t j = 0; j < n; ++j) {
      in.close.push_back(10 * u(rng));
      in.volume.push_back(1000 * u(rng));
      in.amount.push_back(in.close.back() * in.volume.back());
    }
    FlowInput priced = in;
    for (double& c : priced.close) c *= 4.0;
    for (double& a : priced.amount) a *= 4.0;
    EXPECT_NEAR(*flow_in_ratio(priced).value / *flow_in_ratio(in).value, 1.0, 1e-12);
    FlowInput traded = in;
    for (double& v : traded.volume) v *= 3.0;
    for (double& a : traded.amount) a *= 3.0;
    EXPECT_NEAR(*flow_in_ratio(traded).value / *flow_in_ratio(in).value, 1.0 / 3.0, 1e-12);
  }
}

data::MultiFreqPanel two_day_panel() {
  // 2 bars on the previous day, 3 on the as-of day; fields close, volume, vwap
  const std::int64_t d0 = Date(2024, 5, 6).serial() * 1440 + 570;
  const std::int64_t d1 = Date(2024, 5, 7).serial() * 1440 + 570;
  std::vector<std::int64_t> ts{d0, d0 + 60, d1, d1 + 60, d1 + 120};
  std::vector<double> v{50, 10, 1, 60, 20, 2, 10, 100, 10, 11, 200, 11, 10.5, 50, 10.5};
  return data::make_panel("X", Date(2024, 5, 7), ts, v, 3, {});
}

TEST(ComputeFactors, UsesOnlyTheAsOfDay) {
  const auto panel = two_day_panel();
  const FactorRow row = compute_factors(panel, {"close", "volume", "vwap"});
  EXPECT_EQ(row.n_bars, 3u);
  const std::vector<double> r{0.1, 10.5 / 11.0 - 1.0};
  EXPECT_NEAR(*row.rvar, oracle_rvar(r), 1e-15);
  EXPECT_NEAR(*row.rskew, oracle_rskew(r), 1e-12);
  EXPECT_NEAR(*row.rkurt, oracle_rkurt(r), 1e-12);
  EXPECT_NEAR(*row.trend_strength, 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(*row.flow_in_ratio, *flow_in_ratio(FlowInput{{100, 200, 50}, {10, 11, 10.5}, {1000, 2200, 525}, {}}).value,
              1e-15);
  EXPECT_TRUE(row.oi_substituted);
  EXPECT_THROW(compute_factors(panel, {"open", "high", "vwap"}), Error);
}

TEST(ComputeFactors, CsvHasOneRowPerStockAndEmptyCellsForUndefined) {
  data::CrossSection cs;
  cs.date = Date(2024, 5, 7);
  cs.hf_fields = {"close", "volume", "vwap"};
  cs.panels.push_back(two_day_panel());
  const std::int64_t d1 = Date(2024, 5, 7).serial() * 1440 + 570;
  cs.panels.push_back(data::make_panel("Y", cs.date, {d1, d1 + 60}, {5, 10, 5, 5, 10, 5}, 3, {}));
  const auto rows = compute_factors(cs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[1].rskew.has_value());
  const auto path = std::filesystem::temp_directory_path() / "dspo_factors.csv";
  write_factor_csv(path, rows);
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "date,stock_id,n_bars,rvar,rskew,rkurt,downside_beta,flow_in_ratio,trend_strength,oi_source");
  EXPECT_EQ(second, "2024-05-07,Y,2,0,,,,,,volume_delta");
  std::filesystem::remove(path);
}

}  // namespace
