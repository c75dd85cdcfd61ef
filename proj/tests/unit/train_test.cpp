#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"
#include "dspo/train.hpp"
#include "support/gradcheck.hpp"

namespace {

using namespace dspo;
using namespace dspo::train;

TEST(Noam, PeaksAtWarmupWithRequestedValue) {
  const double scale = noam_scale_for_peak(3e-3, 40, 16);
  EXPECT_NEAR(noam_lr(40, 40, 16, scale), 3e-3, 1e-15);
  for (std::size_t s = 1; s < 40; ++s) EXPECT_LT(noam_lr(s, 40, 16, scale), noam_lr(s + 1, 40, 16, scale));
  for (std::size_t s = 40; s < 200; ++s) EXPECT_GT(noam_lr(s, 40, 16, scale), noam_lr(s + 1, 40, 16, scale));
  // linear warmup, inverse square root decay
  EXPECT_NEAR(noam_lr(10, 40, 16, scale) / noam_lr(20, 40, 16, scale), 0.5, 1e-14);
  EXPECT_NEAR(noam_lr(160, 40, 16, scale) / noam_lr(40, 40, 16, scale), 0.5, 1e-14);
  EXPECT_NEAR(noam_lr(1, 1, 4, 2.0), 1.0, 1e-15);
  EXPECT_THROW(noam_lr(0, 40, 16, scale), Error);
  EXPECT_THROW(noam_lr(1, 0, 16, scale), Error);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({0.5, -2.0});
  const std::vector<Tensor> g{Tensor::vector({1.0, -3.0})};
  AdamState state;
  ASSERT_TRUE(adamw_step({&p}, g, state, 0.1, AdamParams{0.9, 0.98, 0.0, 0.0}));
  EXPECT_NEAR(p[0], 0.4, 1e-15);
  EXPECT_NEAR(p[1], -1.9, 1e-15);
  EXPECT_EQ(state.t, 1u);
}

TEST(AdamW, DecayOnlyScalesParameters) {
  Tensor p = Tensor::vector({2.0, -4.0});
  const std::vector<Tensor> g{Tensor::vector({0.0, 0.0})};
  AdamState state;
  ASSERT_TRUE(adamw_step({&p}, g, state, 0.1, AdamParams{0.9, 0.98, 1e-9, 0.01}));
  EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.1 * 0.01), 1e-15);
  EXPECT_NEAR(p[1], -4.0 * (1.0 - 0.1 * 0.01), 1e-15);
}

TEST(AdamW, MatchesReferenceOverSeveralSteps) {
  std::mt19937_64 rng(1);
  Tensor p = dspo::testing::random_tensor(rng, {5});
  const Tensor start = p;
  AdamState state;
  const AdamParams hp{0.9, 0.98, 1e-9, 0.01};
  std::vector<double> m(5, 0.0), v(5, 0.0), ref(start.values().begin(), start.values().end());
  for (int t = 1; t <= 6; ++t) {
    const Tensor g = dspo::testing::random_tensor(rng, {5});
    ASSERT_TRUE(adamw_step({&p}, std::vector<Tensor>{g}, state, 0.01, hp));
    for (std::size_t j = 0; j < 5; ++j) {
      m[j] = 0.9 * m[j] + 0.1 * g[j];
      v[j] = 0.98 * v[j] + 0.02 * g[j] * g[j];
      const double mh = m[j] / (1.0 - std::pow(0.9, t));
      const double vh = v[j] / (1.0 - std::pow(0.98, t));
      ref[j] -= 0.01 * (mh / (std::sqrt(vh) + 1e-9) + 0.01 * ref[j]);
    }
  }
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(p[j], ref[j], 1e-14);
}

TEST(AdamW, RejectsNonFiniteGradientsWithoutSideEffects) {
  Tensor p = Tensor::vector({1.0, 2.0});
  AdamState state;
  const std::vector<Tensor> g{Tensor::vector({1.0, std::nan("")})};
  EXPECT_FALSE(adamw_step({&p}, g, state, 0.1, AdamParams{}));
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 2.0);
  EXPECT_EQ(state.t, 0u);
  EXPECT_THROW(adamw_step({&p}, std::vector<Tensor>{Tensor::vector({1.0})}, state, 0.1, AdamParams{}), Error);
}

TEST(ClipGlobalNorm, CapsJointNormAndKeepsDirection) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> g{dspo::testing::random_tensor(rng, {3, 2}, -5, 5), dspo::testing::random_tensor(rng, {4}, -5, 5)};
    const std::vector<Tensor> before = g;
    const double norm = clip_global_norm(g, 0.5);
    double after = 0.0;
    for (const auto& t : g) {
      for (double x : t.values()) after += x * x;
    }
    EXPECT_LE(std::sqrt(after), 0.5 + 1e-12);
    const double f = std::min(1.0, 0.5 / norm);
    for (std::size_t t = 0; t < g.size(); ++t) {
      for (std::size_t i = 0; i < g[t].size(); ++i) EXPECT_NEAR(g[t][i], before[t][i] * f, 1e-14);
    }
  }
  std::vector<Tensor> small{Tensor::vector({0.1, 0.2})};
  EXPECT_NEAR(clip_global_norm(small, 0.5), std::sqrt(0.05), 1e-15);
  EXPECT_EQ(small[0][0], 0.1);
}

TEST(TrainConfig, ValidationAndNames) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.k = 1;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_objective(objective_name(Objective::Mse)), Objective::Mse);
  EXPECT_EQ(parse_selection(selection_name(Selection::SecondBest)), Selection::SecondBest);
  EXPECT_THROW(parse_objective("hinge"), Error);
  EXPECT_EQ(steps_per_epoch(10, 4), 3u);
  EXPECT_EQ(steps_per_epoch(8, 4), 2u);
}

class TrainLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data::GeneratorConfig g;
    g.n_stocks = 24;
    g.n_days = 14;
    g.bar_minutes = 130;
    g.noise = 0.3;
    auto market = data::generate_synthetic_market(g, 5);
    const std::span<const data::CrossSection> all(market.days);
    const auto state = data::fit_normalizer(all.first(10));
    days_ = new std::vector<data::CrossSection>(data::apply_normalizer(state, all));
  }
  static void TearDownTestSuite() { delete days_; }

  static std::span<const data::CrossSection> train_days() { return std::span<const data::CrossSection>(*days_).first(10); }
  static std::span<const data::CrossSection> val_days() { return std::span<const data::CrossSection>(*days_).subspan(10); }

  static model::ModelParams init_params() {
    model::ModelConfig c;
    c.hf_fields = (*days_)[0].hf_fields.size();
    c.lf_fields = (*days_)[0].lf_fields.size();
    c.d = 4;
    c.seed = 3;
    return model::ModelParams::init(c);
  }

  static TrainConfig config() {
    TrainConfig c;
    c.k = 12;
    c.m = 2;
    c.epochs = 4;
    c.lr = 3e-3;
    c.seed = 17;
    return c;
  }

  static std::vector<data::CrossSection>* days_;
};

std::vector<data::CrossSection>* TrainLoop::days_ = nullptr;

std::string log_text(const TrainResult& r, const std::filesystem::path& path) {
  write_log_csv(path, r.log);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST_F(TrainLoop, SameSeedGivesIdenticalRunsAndLogs) {
  const auto a = dspo::train::train(init_params(), train_days(), val_days(), config());
  const auto b = dspo::train::train(init_params(), train_days(), val_days(), config());
  ASSERT_EQ(a.log.size(), 20u);
  const auto dir = std::filesystem::temp_directory_path();
  EXPECT_EQ(log_text(a, dir / "dspo_log_a.csv"), log_text(b, dir / "dspo_log_b.csv"));
  for (std::size_t i = 0; i < a.final_params.tensors().size(); ++i) {
    const auto x = a.final_params.tensors()[i].value.values();
    const auto y = b.final_params.tensors()[i].value.values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
  auto other = config();
  other.seed = 18;
  const auto c = dspo::train::train(init_params(), train_days(), val_days(), other);
  EXPECT_NE(c.log.back().loss, a.log.back().loss);
}

TEST_F(TrainLoop, ValidationOncePerEpochAndSelectionRules) {
  auto cfg = config();
  const auto best = dspo::train::train(init_params(), train_days(), val_days(), cfg);
  std::vector<std::pair<double, std::size_t>> vals;
  for (const auto& row : best.log) {
    EXPECT_EQ(row.val_rankic.has_value(), row.step % 5 == 0);
    if (row.val_rankic) vals.emplace_back(*row.val_rankic, row.step);
  }
  ASSERT_EQ(vals.size(), 4u);
  std::stable_sort(vals.begin(), vals.end(), [](auto& x, auto& y) { return x.first > y.first; });
  EXPECT_EQ(best.selected_step, vals[0].second);
  EXPECT_EQ(*best.selected_val_rankic, vals[0].first);

  cfg.selection = Selection::SecondBest;
  const auto second = dspo::train::train(init_params(), train_days(), val_days(), cfg);
  EXPECT_EQ(second.selected_step, vals[1].second);
  cfg.selection = Selection::Last;
  const auto last = dspo::train::train(init_params(), train_days(), val_days(), cfg);
  EXPECT_EQ(last.selected_step, 20u);
}

TEST_F(TrainLoop, LossDecreasesOnAverage) {
  auto cfg = config();
  cfg.epochs = 10;
  const auto r = dspo::train::train(init_params(), train_days(), {}, cfg);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.log[i].loss;
    last += r.log[r.log.size() - 1 - i].loss;
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(r.rejected_steps, 0u);
}

TEST_F(TrainLoop, MseObjectiveRunsAndLearningRateFollowsSchedule) {
  auto cfg = config();
  cfg.objective = Objective::Mse;
  const auto r = dspo::train::train(init_params(), train_days(), val_days(), cfg);
  // 20 steps, auto warmup 2, peak at lr
  EXPECT_NEAR(r.log[1].lr, cfg.lr, 1e-15);
  EXPECT_NEAR(r.log[0].lr, cfg.lr / 2.0, 1e-15);
  EXPECT_TRUE(r.final_params.all_finite());
}

TEST_F(TrainLoop, RejectsOverlapAndOversizedSubsample) {
  EXPECT_THROW(dspo::train::train(init_params(), train_days(), train_days().first(1), config()), Error);
  auto cfg = config();
  cfg.k = 100;
  EXPECT_THROW(dspo::train::train(init_params(), train_days(), val_days(), cfg), Error);
}

}  // namespace
