#pragma once
// Classic intraday factors computed from one day's bars: realized variance,
// skewness and kurtosis, downside beta, flow-in ratio and trend strength.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspo/date.hpp"
#include "dspo/marketdata.hpp"

namespace dspo::features {

// Simple close-to-close returns: r_j = c_j / c_{j-1} - 1. Throws
// Error(Data) on a non-positive price.
std::vector<double> interval_returns(std::span<const double> closes);

// sum r^2. Throws Error(Dimension) on an empty input.
double realized_variance(std::span<const double> returns);
// sqrt(N) sum r^3 / RVar^1.5; nullopt when RVar = 0.
std::optional<double> realized_skewness(std::span<const double> returns);
// N sum r^4 / RVar^2; nullopt when RVar = 0.
std::optional<double> realized_kurtosis(std::span<const double> returns);
// sum r^2 [r < 0] / sum r^2; nullopt when RVar = 0.
std::optional<double> downside_beta(std::span<const double> returns);
// (P_n - P_1) / sum |P_i - P_{i-1}|; nullopt when the path never moves.
// Throws Error(Dimension) for fewer than 2 prices.
std::optional<double> trend_strength(std::span<const double> prices);

struct FlowInput {
  std::vector<double> volume;
  std::vector<double> close;
  std::vector<double> amount;  // traded value per bar
  std::vector<double> oi;      // open interest; empty when not available
};

struct FlowResult {
  std::optional<double> value;
  bool oi_substituted = false;  // volume deltas stood in for open interest
};

// For one day with bars j = 1..n:
//   sum_{j>=2} V_j C_j |C_j - C_{j-1}| / A   over   sum_{j>=2} |OI_j - OI_{j-1}| C_j
// where A is the day's total traded amount. Without open interest the
// denominator uses |V_j - V_{j-1}|. nullopt on a zero denominator or fewer
// than two bars.
FlowResult flow_in_ratio(const FlowInput& in);

struct FactorRow {
  Date date;
  std::string stock_id;
  std::size_t n_bars = 0;
  std::optional<double> rvar, rskew, rkurt, downside_beta, flow_in_ratio, trend_strength;
  bool oi_substituted = false;
};

// Factors from the bars stamped on the panel's as-of date. Amount is
// volume * vwap when a vwap field exists, otherwise volume * close; open
// interest is read from an "oi" field when present.
FactorRow compute_factors(const data::MultiFreqPanel& panel, const std::vector<std::string>& hf_fields);
std::vector<FactorRow> compute_factors(const data::CrossSection& cs);

// date,stock_id,n_bars,rvar,rskew,rkurt,downside_beta,flow_in_ratio,trend_strength,oi_source
// Undefined values are empty cells; oi_source is "oi" or "volume_delta".
void write_factor_csv(const std::filesystem::path& path, std::span<const FactorRow> rows);

}  // namespace dspo::features
