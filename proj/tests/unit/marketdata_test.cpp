#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"
#include "dspo/metrics.hpp"

namespace {

namespace fs = std::filesystem;
using dspo::Date;
using dspo::Error;
using dspo::ErrorKind;
using namespace dspo::data;

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("dspo_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// One stock, one date; hf close takes the given values, other prices follow it.
CrossSection tiny_section(Date date, const std::vector<std::vector<double>>& closes, std::vector<double> lf_value,
                          std::vector<double> volumes = {}) {
  CrossSection cs;
  cs.date = date;
  cs.hf_fields = default_hf_fields();
  cs.lf_fields = {"f"};
  for (std::size_t i = 0; i < closes.size(); ++i) {
    std::vector<std::int64_t> ts;
    std::vector<double> values;
    for (std::size_t t = 0; t < closes[i].size(); ++t) {
      ts.push_back(date.serial() * 1440 + 570 + static_cast<std::int64_t>(t) * 30);
      const double c = closes[i][t];
      const double v = volumes.empty() ? 100.0 : volumes[i];
      for (double x : {c, c, c, c, v, c}) values.push_back(x);
    }
    cs.panels.push_back(make_panel("S" + std::to_string(i), date, ts, values, 6, {lf_value.at(i)}));
    cs.returns.push_back(0.01 * static_cast<double>(i));
  }
  return cs;
}

TEST(Date, SerialRoundTripAndWeekdays) {
  const Date d{2024, 2, 29};
  EXPECT_EQ(Date::from_serial(d.serial()), d);
  EXPECT_EQ(Date::parse("2024-02-29"), d);
  EXPECT_EQ(d.to_string(), "2024-02-29");
  EXPECT_EQ((Date{2023, 1, 2}).weekday(), 0);
  EXPECT_EQ((Date{2023, 1, 6}).next_weekday(), (Date{2023, 1, 9}));
  EXPECT_THROW(Date::parse("2023-02-30"), Error);
  EXPECT_THROW(Date::parse("2023-1-02"), Error);
  const auto ts = dspo::parse_timestamp("2023-01-02T09:30:00");
  EXPECT_EQ(dspo::format_timestamp(ts), "2023-01-02T09:30:00");
  EXPECT_EQ(dspo::timestamp_date(ts), (Date{2023, 1, 2}));
}

TEST(Csv, QuotedFieldsAndComments) {
  const fs::path dir = scratch_dir("csv_quotes");
  {
    dspo::csv::Writer w(dir / "a.csv");
    w.comment("header note");
    w.row({"id", "text"});
    w.row({"1", "has,comma"});
    w.row({"2", "has \"quote\"\nand newline"});
    w.close();
  }
  dspo::csv::Reader r(dir / "a.csv");
  EXPECT_EQ(r.header(), (dspo::csv::Row{"id", "text"}));
  dspo::csv::Row row;
  ASSERT_TRUE(r.next(row));
  EXPECT_EQ(row[1], "has,comma");
  ASSERT_TRUE(r.next(row));
  EXPECT_EQ(row[1], "has \"quote\"\nand newline");
  EXPECT_FALSE(r.next(row));
}

TEST(Csv, ShortestRoundTripFormatting) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) {
    EXPECT_EQ(std::stod(dspo::csv::format_double(x)), x);
  }
  EXPECT_EQ(dspo::csv::format_double(0.5), "0.5");
}

TEST(Normalizer, SampleStdOfSingleStock) {
  const std::vector<CrossSection> train{tiny_section({2023, 1, 2}, {{1, 2, 3}, {5, 5, 6}}, {5, 15})};
  const auto state = fit_normalizer(train);
  const auto close = std::find(state.hf_fields.begin(), state.hf_fields.end(), "close") - state.hf_fields.begin();
  EXPECT_DOUBLE_EQ(state.hf_stats.at("S0")[close].mean, 2.0);
  EXPECT_DOUBLE_EQ(state.hf_stats.at("S0")[close].std, 1.0);
}

TEST(Normalizer, LowFrequencyMinMaxAndClamp) {
  std::vector<CrossSection> train{tiny_section({2023, 1, 2}, {{1, 2, 3}, {2, 3, 5}}, {5, 15})};
  const auto state = fit_normalizer(train);
  EXPECT_EQ(state.lf_min, (std::vector<double>{5}));
  EXPECT_EQ(state.lf_max, (std::vector<double>{15}));
  const auto mid = apply_normalizer(state, tiny_section({2023, 1, 3}, {{1, 2, 3}, {2, 3, 5}}, {10, 5}));
  EXPECT_DOUBLE_EQ(mid.panels[0].lf[0], 0.5);
  EXPECT_DOUBLE_EQ(mid.panels[1].lf[0], 0.0);
  const auto out = apply_normalizer(state, tiny_section({2023, 1, 3}, {{1, 2, 3}, {2, 3, 5}}, {20, -3}));
  EXPECT_DOUBLE_EQ(out.panels[0].lf[0], 1.0);
  EXPECT_DOUBLE_EQ(out.panels[1].lf[0], 0.0);
}

TEST(Normalizer, ConstantFieldsAreDropped) {
  // every stock has the same volume on every bar, and lf is constant
  std::vector<CrossSection> train{tiny_section({2023, 1, 2}, {{1, 2, 3}, {2, 3, 5}}, {7, 7})};
  const auto state = fit_normalizer(train);
  EXPECT_EQ(state.dropped_hf, (std::vector<std::string>{"volume"}));
  EXPECT_EQ(state.dropped_lf, (std::vector<std::string>{"f"}));
  EXPECT_FALSE(state.warnings.empty());
  const auto out = apply_normalizer(state, train[0]);
  EXPECT_EQ(out.hf_fields.size(), 5u);
  EXPECT_TRUE(out.lf_fields.empty());
  EXPECT_EQ(out.panels[0].n_fields(), 5u);
}

TEST(Normalizer, UnknownFieldIsAnError) {
  std::vector<CrossSection> train{tiny_section({2023, 1, 2}, {{1, 2, 3}, {2, 3, 5}}, {5, 15})};
  const auto state = fit_normalizer(train);
  auto other = train[0];
  other.lf_fields = {"g"};
  EXPECT_THROW(apply_normalizer(state, other), Error);
}

TEST(Normalizer, TrainingWindowIsStandardized) {
  GeneratorConfig cfg;
  cfg.n_stocks = 12;
  cfg.n_days = 15;
  cfg.bar_minutes = 65;
  const auto market = generate_synthetic_market(cfg, 3);
  const auto state = fit_normalizer(market.days);
  const auto norm = apply_normalizer(state, market.days);
  // Recompute statistics over each stock's distinct bars.
  for (std::size_t i = 0; i < cfg.n_stocks; ++i) {
    const auto& series = *norm.back().panels[i].series;
    const std::size_t last = norm.back().panels[i].first + norm.back().panels[i].length;
    for (std::size_t f = 0; f < series.n_fields; ++f) {
      double mean = 0.0, ss = 0.0;
      for (std::size_t t = 0; t < last; ++t) mean += series.values[t * series.n_fields + f];
      mean /= static_cast<double>(last);
      for (std::size_t t = 0; t < last; ++t) {
        const double d = series.values[t * series.n_fields + f] - mean;
        ss += d * d;
      }
      EXPECT_NEAR(mean, 0.0, 1e-9);
      EXPECT_NEAR(std::sqrt(ss / static_cast<double>(last - 1)), 1.0, 1e-9);
    }
  }
  for (const auto& cs : norm) {
    for (const auto& p : cs.panels) {
      for (double v : p.lf) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
      for (double v : p.hf()) EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Normalizer, UnseenStockUsesPooledStatistics) {
  std::vector<CrossSection> train{tiny_section({2023, 1, 2}, {{1, 2, 3}, {2, 3, 5}}, {5, 15}, {100, 200})};
  const auto state = fit_normalizer(train);
  auto test = tiny_section({2023, 1, 3}, {{1, 2, 3}, {2, 3, 5}}, {5, 15}, {100, 200});
  test.panels[1].stock_id = "NEW";
  const auto out = apply_normalizer(state, test);
  EXPECT_TRUE(out.panels[1].hf_tensor().all_finite());
}

TEST(Normalizer, SavedStateReloadsExactly) {
  GeneratorConfig cfg;
  cfg.n_stocks = 5;
  cfg.n_days = 4;
  cfg.bar_minutes = 65;
  const auto market = generate_synthetic_market(cfg, 3);
  const auto& days = market.days;
  const auto state = fit_normalizer(days);
  const fs::path dir = scratch_dir("normalizer");
  save_normalizer(dir / "n.csv", state);
  const auto back = load_normalizer(dir / "n.csv");
  EXPECT_EQ(back.hf_fields, state.hf_fields);
  EXPECT_EQ(back.lf_fields, state.lf_fields);
  EXPECT_EQ(back.dropped_hf, state.dropped_hf);
  EXPECT_EQ(back.fitted_from, state.fitted_from);
  EXPECT_EQ(back.lf_min, state.lf_min);
  ASSERT_EQ(back.hf_stats.size(), state.hf_stats.size());
  for (std::size_t d = 0; d < days.size(); ++d) {
    EXPECT_TRUE(apply_normalizer(back, days[d]).same_content(apply_normalizer(state, days[d])));
  }
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "kind,key,field,a,b\nweird,,x,,\n";
  }
  EXPECT_THROW(load_normalizer(dir / "bad.csv"), Error);
}

TEST(FilterTradable, DropsZeroVolumeStocks) {
  const auto cs = tiny_section({2023, 1, 2}, {{1, 2}, {1, 2}, {1, 2}}, {1, 2, 3}, {10, 0, 5});
  const auto out = filter_tradable(cs);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.panels[0].stock_id, "S0");
  EXPECT_EQ(out.panels[1].stock_id, "S2");
  EXPECT_EQ(out.returns, (std::vector<double>{0.0, 0.02}));
  EXPECT_TRUE(filter_tradable(out).same_content(out));
}

TEST(FilterTradable, AllActiveIsIdentityAndAllHaltedIsError) {
  const auto active = tiny_section({2023, 1, 2}, {{1, 2}, {1, 2}}, {1, 2}, {10, 5});
  EXPECT_TRUE(filter_tradable(active).same_content(active));
  const auto halted = tiny_section({2023, 1, 2}, {{1, 2}, {1, 2}}, {1, 2}, {0, 0});
  EXPECT_THROW(filter_tradable(halted), Error);
}

TEST(Generator, NoiselessReturnsAreMonotoneInLatentScore) {
  GeneratorConfig cfg;
  cfg.n_stocks = 30;
  cfg.n_days = 5;
  cfg.bar_minutes = 65;
  cfg.noise = 0.0;
  const auto market = generate_synthetic_market(cfg, 11);
  for (std::size_t d = 0; d < market.days.size(); ++d) {
    EXPECT_DOUBLE_EQ(*dspo::metrics::spearman(market.latent_scores[d], market.days[d].returns), 1.0);
  }
}

TEST(Generator, PanelsAreValidAndWindowed) {
  GeneratorConfig cfg;
  cfg.n_stocks = 5;
  cfg.n_days = 4;
  cfg.bar_minutes = 30;
  cfg.halted_stocks = 1;
  const auto market = generate_synthetic_market(cfg, 2);
  ASSERT_EQ(market.days.size(), 4u);
  for (const auto& cs : market.days) {
    cs.validate();
    for (const auto& p : cs.panels) {
      validate_panel(p, cs.hf_fields, 10 * bars_per_day(30));
      ASSERT_TRUE(p.first_bar_of_as_of().has_value());
      EXPECT_EQ(*p.first_bar_of_as_of(), 9 * bars_per_day(30));
    }
    EXPECT_EQ(filter_tradable(cs).size(), 4u);
  }
}

TEST(Generator, ForwardReturnIsNextOpenToFollowingOpen) {
  GeneratorConfig cfg;
  cfg.n_stocks = 3;
  cfg.n_days = 3;
  cfg.bar_minutes = 65;
  const auto market = generate_synthetic_market(cfg, 5);
  const std::size_t bars = bars_per_day(65);
  for (std::size_t d = 0; d < market.days.size(); ++d) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& p = market.days[d].panels[i];
      const auto& s = *p.series;
      const std::size_t next_open = p.first + p.length;  // first bar of T+1
      const double o1 = s.values[next_open * 6];
      const double o2 = s.values[(next_open + bars) * 6];
      EXPECT_NEAR(o2 / o1 - 1.0, market.days[d].returns[i], 1e-12);
    }
  }
}

TEST(Generator, SameSeedIsBitIdentical) {
  GeneratorConfig cfg;
  cfg.n_stocks = 8;
  cfg.n_days = 6;
  const auto a = generate_synthetic_market(cfg, 42);
  const auto b = generate_synthetic_market(cfg, 42);
  const auto c = generate_synthetic_market(cfg, 43);
  for (std::size_t d = 0; d < a.days.size(); ++d) EXPECT_TRUE(a.days[d].same_content(b.days[d]));
  EXPECT_FALSE(a.days[0].same_content(c.days[0]));
}

TEST(Generator, InvalidConfigIsRejected) {
  GeneratorConfig cfg;
  cfg.n_stocks = 1;
  EXPECT_THROW(generate_synthetic_market(cfg, 1), Error);
  cfg = {};
  cfg.noise_dof = 1.5;
  EXPECT_THROW(generate_synthetic_market(cfg, 1), Error);
  cfg = {};
  cfg.bar_minutes = 0;
  EXPECT_THROW(generate_synthetic_market(cfg, 1), Error);
}

TEST(Generator, LargeMarketGeneratesQuickly) {
  GeneratorConfig cfg;
  cfg.n_stocks = 2000;
  cfg.n_days = 252;
  cfg.bar_minutes = 65;
  const auto start = std::chrono::steady_clock::now();
  const auto market = generate_synthetic_market(cfg, 1);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(market.days.size(), 252u);
  EXPECT_LT(seconds, 60.0);
}

TEST(CsvDataset, RoundTripReproducesCrossSections) {
  GeneratorConfig cfg;
  cfg.n_stocks = 4;
  cfg.n_days = 3;
  cfg.bar_minutes = 65;
  const auto market = generate_synthetic_market(cfg, 9);
  const fs::path dir = scratch_dir("roundtrip");
  write_csv(dir, market.days, &market.latent_scores);
  const auto loaded = load_csv(dir);
  ASSERT_EQ(loaded.size(), market.days.size());
  for (std::size_t d = 0; d < loaded.size(); ++d) EXPECT_TRUE(loaded[d].same_content(market.days[d]));
  const auto latent = load_latent_csv(dir);
  EXPECT_EQ(latent.at(market.days[0].date).at("S0000"), market.latent_scores[0][0]);
}

TEST(CsvDataset, GapsAreFilledAndBarsSorted) {
  const fs::path dir = scratch_dir("gaps");
  fs::create_directories(dir / "hf" / "2023-01-02");
  fs::create_directories(dir / "lf");
  fs::create_directories(dir / "returns");
  std::ofstream(dir / "returns" / "2023-01-02.csv") << "stock_id,forward_return\nA,0.01\nB,-0.02\n";
  std::ofstream(dir / "lf" / "2023-01-02.csv") << "stock_id,f\nA,1\nB,2\n";
  // A lacks the 10:00 bar and lists bars out of order; B lacks the first bar.
  std::ofstream(dir / "hf" / "2023-01-02" / "A.csv")
      << "timestamp,open,high,low,close,volume,vwap\n"
      << "2023-01-02T10:30:00,11,12,10,11,7,11\n"
      << "2023-01-02T09:30:00,10,11,9,10,5,10\n";
  std::ofstream(dir / "hf" / "2023-01-02" / "B.csv")
      << "timestamp,open,high,low,close,volume,vwap\n"
      << "2023-01-02T10:00:00,20,21,19,20,3,20\n"
      << "2023-01-02T10:30:00,21,22,20,21,4,21\n";
  const auto days = load_csv(dir);
  ASSERT_EQ(days.size(), 1u);
  const auto& a = days[0].panels[0];
  const auto& b = days[0].panels[1];
  ASSERT_EQ(a.n_bars(), 3u);
  EXPECT_EQ(a.hf_at(1, 3), 10.0);  // close forward-filled
  EXPECT_EQ(a.hf_at(1, 4), 0.0);   // volume zero-filled
  EXPECT_EQ(a.hf_at(2, 3), 11.0);
  EXPECT_EQ(b.hf_at(0, 3), 0.0);  // nothing to carry forward yet
  EXPECT_EQ(b.hf_at(1, 0), 20.0);
}

TEST(CsvDataset, MalformedRowReportsFileAndLine) {
  const fs::path dir = scratch_dir("malformed");
  fs::create_directories(dir / "hf" / "2023-01-02");
  fs::create_directories(dir / "lf");
  fs::create_directories(dir / "returns");
  std::ofstream(dir / "returns" / "2023-01-02.csv") << "stock_id,forward_return\nA,0.01\nB,0.02\n";
  std::ofstream(dir / "lf" / "2023-01-02.csv") << "stock_id,f\nA,1\nB,2\n";
  std::ofstream(dir / "hf" / "2023-01-02" / "A.csv")
      << "timestamp,open,high,low,close,volume,vwap\n2023-01-02T09:30:00,10,11,9,abc,5,10\n";
  std::ofstream(dir / "hf" / "2023-01-02" / "B.csv")
      << "timestamp,open,high,low,close,volume,vwap\n2023-01-02T09:30:00,10,11,9,10,5,10\n";
  try {
    load_csv(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("A.csv:2"), std::string::npos) << e.what();
  }
}

TEST(CsvDataset, MissingMandatoryColumnIsAnError) {
  const fs::path dir = scratch_dir("missing_col");
  fs::create_directories(dir / "hf" / "2023-01-02");
  fs::create_directories(dir / "lf");
  fs::create_directories(dir / "returns");
  std::ofstream(dir / "returns" / "2023-01-02.csv") << "stock_id,forward_return\nA,0.01\nB,0.02\n";
  std::ofstream(dir / "lf" / "2023-01-02.csv") << "stock_id,f\nA,1\nB,2\n";
  for (const char* id : {"A", "B"}) {
    std::ofstream(dir / "hf" / "2023-01-02" / (std::string(id) + ".csv"))
        << "timestamp,open,high,low,close,vwap\n2023-01-02T09:30:00,10,11,9,10,10\n";
  }
  EXPECT_THROW(load_csv(dir), Error);
}

}  // namespace
