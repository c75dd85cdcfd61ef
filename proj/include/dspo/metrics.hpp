#pragma once
// Ranking and portfolio evaluation metrics. Undefined results (constant
// inputs, zero dispersion) are reported as std::nullopt.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dspo/date.hpp"

namespace dspo::metrics {

// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of average ranks. Throws Error(Dimension) on length
// mismatch or n < 2; nullopt when either side is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct DailyEvaluation {
  Date date;
  std::optional<double> rank_ic;
  std::size_t n_stocks = 0;
};

struct RankIcSummary {
  std::size_t n_days = 0;
  std::size_t n_valid = 0;
  std::optional<double> mean;
  std::optional<double> std;  // sample (n-1)
  std::optional<double> icir;
};

// Sample (n-1) statistics; nullopt when undefined.
std::optional<double> sample_mean(std::span<const double> x);
std::optional<double> sample_std(std::span<const double> x);

// mean / sample std of the valid daily RankICs.
std::optional<double> rank_icir(std::span<const DailyEvaluation> daily);
RankIcSummary summarize(std::span<const DailyEvaluation> daily);

struct Drawdown {
  double absolute = 0.0;      // max over t of (running peak - P_t)
  double relative_pct = 0.0;  // max over t of (running peak - P_t) / running peak, in percent
};

// Throws Error(Data) for an empty series.
Drawdown max_drawdown(std::span<const double> equity);

// mean(excess) / sample std(excess).
std::optional<double> information_ratio(std::span<const double> portfolio, std::span<const double> benchmark);

// (final / initial - 1) * 100.
double accumulated_return(std::span<const double> equity);

// date,rank_ic,n_stocks (empty cell for undefined days).
void write_daily_report(const std::filesystem::path& path, std::span<const DailyEvaluation> daily);
// metric,value rows for the aggregate.
void write_summary_report(const std::filesystem::path& path, const RankIcSummary& summary);

}  // namespace dspo::metrics
