#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dspo/error.hpp"
#include "dspo/sampler.hpp"

namespace {

using namespace dspo::sampler;
using dspo::data::CrossSection;

std::vector<CrossSection> fake_days(std::size_t n_days, std::size_t n_stocks) {
  std::vector<CrossSection> days;
  for (std::size_t d = 0; d < n_days; ++d) {
    CrossSection cs;
    cs.date = dspo::Date::from_serial(19000 + static_cast<std::int64_t>(d));
    cs.hf_fields = {"close"};
    for (std::size_t i = 0; i < n_stocks; ++i) {
      cs.panels.push_back(dspo::data::make_panel("S" + std::to_string(i), cs.date, {0}, {double(i)}, 1, {}));
      cs.returns.push_back(static_cast<double>(d * 1000 + i));
    }
    days.push_back(std::move(cs));
  }
  return days;
}

TEST(CountUniqueSubsamples, HandValues) {
  EXPECT_NEAR(count_unique_subsamples(4, 2), std::log10(6.0), 1e-12);
  EXPECT_NEAR(count_unique_subsamples(7, 7), 0.0, 1e-12);
  EXPECT_NEAR(count_unique_subsamples(4000, 1000), 975.04, 0.01);
  EXPECT_THROW(count_unique_subsamples(3, 4), dspo::Error);
}

TEST(DrawMinibatch, FullCrossSectionIsIdentity) {
  const auto days = fake_days(1, 6);
  Rng rng(1);
  const auto batch = draw_minibatch(days, {1, 6, 0}, rng);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_TRUE(batch[0].same_content(days[0]));
}

TEST(DrawMinibatch, DistinctDaysAndAlignedReturns) {
  const auto days = fake_days(10, 20);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto batch = draw_minibatch(days, {4, 7, 0}, rng);
    std::set<dspo::Date> dates;
    for (const auto& cs : batch) {
      dates.insert(cs.date);
      ASSERT_EQ(cs.size(), 7u);
      std::set<std::string> ids;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        ids.insert(cs.panels[i].stock_id);
        // return encodes (day, stock); the restriction must keep the pairing
        const auto d = static_cast<std::size_t>(cs.returns[i]) / 1000;
        EXPECT_EQ(days[d].date, cs.date);
        EXPECT_EQ("S" + std::to_string(static_cast<std::size_t>(cs.returns[i]) % 1000), cs.panels[i].stock_id);
      }
      EXPECT_EQ(ids.size(), 7u);
    }
    EXPECT_EQ(dates.size(), 4u);
  }
}

TEST(DrawMinibatch, SameSeedSameSequence) {
  const auto days = fake_days(8, 30);
  Sampler a({3, 5, 99}), b({3, 5, 99});
  for (int i = 0; i < 20; ++i) {
    const auto x = a.next(days), y = b.next(days);
    for (std::size_t j = 0; j < x.size(); ++j) EXPECT_TRUE(x[j].same_content(y[j]));
  }
}

TEST(DrawMinibatch, OversizedRequestsAreErrors) {
  const auto days = fake_days(3, 5);
  Rng rng(0);
  EXPECT_THROW(draw_minibatch(days, {1, 6, 0}, rng), dspo::Error);
  EXPECT_THROW(draw_minibatch(days, {4, 2, 0}, rng), dspo::Error);
  EXPECT_THROW((SubSampleSpec{2, 1, 0}.validate(3, 5)), dspo::Error);
}

TEST(DrawMinibatch, StockInclusionIsUniform) {
  const auto days = fake_days(1, 100);
  Rng rng(2024);
  std::vector<double> hits(100, 0.0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const auto batch = draw_minibatch(days, {1, 10, 0}, rng);
    for (const auto& p : batch[0].panels) hits[std::stoul(p.stock_id.substr(1))] += 1;
  }
  const double se = std::sqrt(0.1 * 0.9 / draws);
  for (double h : hits) EXPECT_NEAR(h / draws, 0.1, 3.0 * se + 1e-3);
}

TEST(DrawMinibatch, PairStatisticIsUnbiased) {
  // g(i, j) = |i - j|^1.5 over ordered pairs; subset mean vs full-set mean
  const std::size_t n = 60, k = 8;
  auto g = [](std::size_t i, std::size_t j) { return std::pow(std::abs(double(i) - double(j)), 1.5); };
  double full = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) full += g(i, j);
    }
  }
  full /= static_cast<double>(n * (n - 1));
  Rng rng(7);
  const int draws = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto idx = sample_without_replacement(n, k, rng);
    double m = 0.0;
    for (std::size_t a : idx) {
      for (std::size_t b : idx) {
        if (a != b) m += g(a, b);
      }
    }
    m /= static_cast<double>(k * (k - 1));
    sum += m;
    sum_sq += m * m;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(mean - full), 3.0 * se);
}

}  // namespace
