#pragma once
// Sorted-portfolio simulator: portfolios are formed from day-T scores and
// executed at the day-T+1 open with commission, a per-bar volume cap and
// quadratic price impact. Positions are marked at each day's open.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspo/date.hpp"
#include "dspo/marketdata.hpp"

namespace dspo::backtest {

enum class Mode { LongOnly, LongShort };

std::string mode_name(Mode m);
Mode parse_mode(std::string_view s);

// How commission_rate applies: a fraction of traded notional, or a currency
// amount per share traded.
enum class CommissionBasis { Notional, PerShare };
std::string commission_basis_name(CommissionBasis b);
CommissionBasis parse_commission_basis(std::string_view s);

struct ExecutionConfig {
  double commission_rate = 0.0002;  // of traded notional (or per share, see basis)
  CommissionBasis commission_basis = CommissionBasis::Notional;
  double volume_limit = 0.0025;     // share of the open bar's volume
  double impact_coeff = 0.01;
  double initial_capital = 1e6;
  Mode mode = Mode::LongShort;
  double decile = 0.10;
  // No volume cap; the impact ratio is then zero, so impact vanishes too.
  bool unlimited_volume = false;
  // Keep trading towards the last targets on days without new scores, so
  // volume-capped remainders fill later instead of being dropped.
  bool carry_unfilled = false;
  // Long-short only: short sale proceeds buy additional longs, so the long
  // leg carries all the equity and the short leg half of it.
  bool reinvest_short_proceeds = false;

  void validate() const;
};

struct ScoredStock {
  std::string stock_id;
  double score = 0.0;
};

// Stock id -> target weight as a fraction of equity (negative = short). Each
// leg carries half the gross exposure in long-short mode, all of it in
// long-only mode, split equally within the leg. With reinvested short
// proceeds the long leg carries the full equity.
struct TargetPortfolio {
  std::map<std::string, double> weights;
  bool ties_at_cutoff = false;  // selection depended on the stock_id tie rule
};

// Top floor(N * decile) (at least 1) long, the same count short in
// long-short mode. Ties are broken by stock_id ascending: among equal scores
// the smaller id ranks higher. Throws Error(Data) for N < 2 and duplicate ids.
TargetPortfolio build_portfolio(std::span<const ScoredStock> scores, const ExecutionConfig& config);

struct OpenBar {
  double open = 0.0;
  double volume = 0.0;
};

struct MarketDay {
  Date date;
  std::map<std::string, OpenBar> bars;  // stocks with an opening bar that day
};

struct Fill {
  Date date;
  std::string stock_id;
  double desired = 0.0;  // signed shares wanted
  double shares = 0.0;   // signed shares filled
  double price = 0.0;    // executed price
  double fee = 0.0;
};

struct EquityRow {
  Date date;
  double equity = 0.0;
  double cash = 0.0;
  double turnover = 0.0;  // traded notional / pre-trade equity
};

struct BacktestLedger {
  std::vector<EquityRow> equity;   // first row: initial capital on the first score date
  std::vector<Fill> fills;
  std::map<Date, std::map<std::string, double>> holdings;  // post-trade, per execution day
  std::vector<std::string> warnings;
  std::size_t tie_days = 0;
};

struct BacktestSummary {
  double accumulated_return_pct = 0.0;
  std::optional<double> information_ratio;
  double mdd_absolute = 0.0;
  double mdd_pct = 0.0;
  double mean_turnover = 0.0;  // averaged over execution days
  double total_fees = 0.0;
  std::size_t n_days = 0;      // execution days
  std::size_t tie_days = 0;
};

// Book state between days.
struct Book {
  double cash = 0.0;
  std::map<std::string, double> shares;
  std::map<std::string, double> last_price;
};

// Trades `book` towards `targets` at the opening bars of `day`. Pre-trade
// equity is marked at today's opens (last known price for stocks without a
// bar). Held or targeted stocks without a bar are not traded. Appends fills
// and warnings; returns the traded notional.
double execute_day(Book& book, const TargetPortfolio& targets, const MarketDay& day, const ExecutionConfig& config,
                   std::vector<Fill>& fills, std::vector<std::string>& warnings);

// Marks the book at the day's opens (last known price when a bar is missing).
double mark_to_market(const Book& book, const MarketDay& day);

// Scores of market day j drive the trades at the open of market day j + 1.
// `market` must be date-sorted with unique dates.
BacktestLedger run_backtest(const std::map<Date, std::vector<ScoredStock>>& scores_by_day,
                            std::span<const MarketDay> market, const ExecutionConfig& config);

// Daily portfolio returns from the equity curve, and the equal-weight
// open-to-open return of all stocks quoted on both days as the benchmark.
std::vector<double> portfolio_returns(const BacktestLedger& ledger);
std::vector<double> benchmark_returns(const BacktestLedger& ledger, std::span<const MarketDay> market);
BacktestSummary summarize(const BacktestLedger& ledger, std::span<const MarketDay> market);

// Opening bars from (raw, unnormalized) cross-sections: the first bar stamped
// on each panel's as-of date.
std::vector<MarketDay> market_from_cross_sections(std::span<const data::CrossSection> days);

// CSV I/O:
//   market   date,stock_id,open,volume
//   scores   date,stock_id,score
//   equity   date,equity,cash,turnover
//   fills    date,stock_id,desired,shares,price,fee
//   summary  metric,value
std::vector<MarketDay> load_market_csv(const std::filesystem::path& path);
std::map<Date, std::vector<ScoredStock>> load_scores_csv(const std::filesystem::path& path);
void write_scores_csv(const std::filesystem::path& path, const std::map<Date, std::vector<ScoredStock>>& scores);
void write_equity_csv(const std::filesystem::path& path, const BacktestLedger& ledger);
void write_fills_csv(const std::filesystem::path& path, const BacktestLedger& ledger);
void write_summary_csv(const std::filesystem::path& path, const BacktestSummary& summary);

}  // namespace dspo::backtest
