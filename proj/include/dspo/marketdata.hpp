#pragma once
// Multi-frequency stock data: panels, cross-sections, normalization,
// tradability filtering, CSV ingestion and a latent-factor synthetic market.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspo/date.hpp"
#include "dspo/tensor.hpp"

namespace dspo::data {

// Default high-frequency bar layout, in CSV column order.
inline const std::vector<std::string>& default_hf_fields() {
  static const std::vector<std::string> fields{"open", "high", "low", "close", "volume", "vwap"};
  return fields;
}

inline constexpr std::size_t kSessionMinutes = 390;  // 09:30 - 16:00
inline constexpr std::size_t kSessionOpenMinute = 570;
inline constexpr std::size_t kWindowDays = 10;

std::size_t bars_per_day(std::size_t bar_minutes);

// Row-major (bars x fields) block of bars for one stock, sorted by timestamp.
// Shared between the overlapping windows of consecutive trading dates.
struct BarSeries {
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::size_t n_fields = 0;

  std::size_t size() const noexcept { return timestamps.size(); }
};

struct MultiFreqPanel {
  std::string stock_id;
  Date as_of;
  std::shared_ptr<const BarSeries> series;
  std::size_t first = 0;   // first bar of the window inside `series`
  std::size_t length = 0;  // T
  std::vector<double> lf;

  std::size_t n_bars() const noexcept { return length; }
  std::size_t n_fields() const noexcept { return series ? series->n_fields : 0; }
  std::span<const double> hf() const;
  std::span<const std::int64_t> timestamps() const;
  double hf_at(std::size_t bar, std::size_t field) const { return hf()[bar * n_fields() + field]; }
  Tensor hf_tensor() const;
  // Index of the first bar stamped on `as_of` (the day's opening bar).
  std::optional<std::size_t> first_bar_of_as_of() const;

  // Content equality (ignores whether storage is shared).
  bool same_content(const MultiFreqPanel& other) const;
};

// Builds a panel that owns its bars.
MultiFreqPanel make_panel(std::string stock_id, Date as_of, std::vector<std::int64_t> timestamps,
                          std::vector<double> values, std::size_t n_fields, std::vector<double> lf);

struct CrossSection {
  Date date;
  std::vector<std::string> hf_fields;
  std::vector<std::string> lf_fields;
  std::vector<MultiFreqPanel> panels;
  std::vector<double> returns;

  std::size_t size() const noexcept { return panels.size(); }
  // Throws Error(Data) if returns/panels misalign, ids repeat, N < 2, or a
  // panel's width disagrees with hf_fields/lf_fields.
  void validate() const;
  std::size_t hf_field_index(std::string_view name) const;
  bool same_content(const CrossSection& other) const;
};

// OHLC ordering, non-negative volume, finite values, and T when given.
void validate_panel(const MultiFreqPanel& panel, const std::vector<std::string>& hf_fields,
                    std::optional<std::size_t> expected_bars = std::nullopt);

// ---------------------------------------------------------------------------
// Normalization

struct FieldStats {
  double mean = 0.0;
  double std = 1.0;
};

struct NormalizationState {
  std::vector<std::string> hf_fields;  // retained, in output order
  std::vector<std::string> lf_fields;  // retained, in output order
  std::vector<std::string> dropped_hf;
  std::vector<std::string> dropped_lf;
  // Per stock, one entry per retained hf field.
  std::map<std::string, std::vector<FieldStats>> hf_stats;
  // Pooled over all training stocks; used for stocks unseen in training.
  std::vector<FieldStats> hf_pooled;
  std::vector<double> lf_min;
  std::vector<double> lf_max;
  Date fitted_from;
  Date fitted_to;
  std::vector<std::string> warnings;
};

// Sample (n-1) standard deviation per stock over the distinct training bars;
// global min/max over training dates for low-frequency fields.
NormalizationState fit_normalizer(std::span<const CrossSection> train);
// Standardizes hf per stock and min-max scales lf, clamped to [0, 1].
CrossSection apply_normalizer(const NormalizationState& state, const CrossSection& cs);
std::vector<CrossSection> apply_normalizer(const NormalizationState& state, std::span<const CrossSection> days);

// Drops stocks whose total volume over the window is zero. Throws if fewer
// than two stocks remain.
CrossSection filter_tradable(const CrossSection& cs);

// ---------------------------------------------------------------------------
// Synthetic market

enum class ReturnHorizon { NextOpenToFollowingOpen, CloseToNextClose };

struct GeneratorConfig {
  std::size_t n_stocks = 200;
  std::size_t n_days = 120;  // number of labelled cross-sections
  std::size_t bar_minutes = 30;
  std::size_t window_days = kWindowDays;
  // Latent 0 sets the daily volume level, latent 1 (if present) the intraday
  // volatility; every latent also appears, noisily, in the first lf fields.
  std::size_t n_latent = 1;
  // Return = return_scale * (latent_score + noise * shock + market), where
  // latent_score has unit cross-sectional variance, shock is a unit-variance
  // idiosyncratic draw and market is a common daily move. noise = 0 gives a
  // perfectly monotone relation.
  double noise = 1.0;
  double return_scale = 0.01;
  double noise_dof = 0.0;   // 0 = Gaussian shocks; > 2 = Student-t with that many degrees of freedom
  double market_vol = 0.0;  // std of the common daily move, in units of return_scale
  // day volume = base * max(0.05, 1 + volume_loading * z0)
  double volume_loading = 0.25;
  double volume_noise = 0.1;  // per-bar log-normal volume noise
  // day volatility = base * exp(volatility_loading * z1)
  double volatility_loading = 0.4;
  std::size_t n_lf_fields = 4;
  double lf_noise = 0.5;
  std::size_t halted_stocks = 0;  // stocks that never trade (zero volume)
  ReturnHorizon horizon = ReturnHorizon::NextOpenToFollowingOpen;
  Date start{2023, 1, 2};

  void validate() const;
};

struct SyntheticMarket {
  std::vector<CrossSection> days;
  // Ground-truth latent score per panel, aligned with days[d].panels.
  std::vector<std::vector<double>> latent_scores;
};

SyntheticMarket generate_synthetic_market(const GeneratorConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV dataset layout:
//   hf/<date>/<stock_id>.csv   timestamp,open,high,low,close,volume,vwap
//   lf/<date>.csv              stock_id,<field1>,...,<fieldb>
//   returns/<date>.csv         stock_id,forward_return
//   latent/<date>.csv          stock_id,latent_score      (synthetic only)

struct CsvWriteOptions {
  std::string header_comment;  // written as a leading "# ..." line when non-empty
};

void write_csv(const std::filesystem::path& dir, std::span<const CrossSection> days,
               const std::vector<std::vector<double>>* latent_scores = nullptr,
               const CsvWriteOptions& options = {});
std::vector<CrossSection> load_csv(const std::filesystem::path& dir);
// Ground-truth scores written by write_csv, keyed by date then stock.
std::map<Date, std::map<std::string, double>> load_latent_csv(const std::filesystem::path& dir);

// Dates in [from, to] (inclusive) of a date-sorted dataset.
std::vector<CrossSection> select_dates(std::span<const CrossSection> days, std::optional<Date> from,
                                       std::optional<Date> to);

// Normalization state as CSV: kind,key,field,a,b with rows
//   hf,<stock_id>,<field>,mean,std     hf_pooled,,<field>,mean,std
//   lf,,<field>,min,max                dropped_hf,,<field>,,   dropped_lf,,<field>,,
//   fitted,<from>,<to>,,
// Numbers use shortest round-trip formatting, so a reload is exact.
void save_normalizer(const std::filesystem::path& path, const NormalizationState& state);
NormalizationState load_normalizer(const std::filesystem::path& path);

}  // namespace dspo::data
