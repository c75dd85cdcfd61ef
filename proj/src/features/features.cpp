#include "dspo/features.hpp"

#include <algorithm>
#include <cmath>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"

namespace dspo::features {

std::vector<double> interval_returns(std::span<const double> closes) {
  std::vector<double> out;
  for (std::size_t j = 1; j < closes.size(); ++j) {
    if (!(closes[j - 1] > 0.0) || !(closes[j] > 0.0)) fail(ErrorKind::Data, "interval_returns: non-positive price");
    out.push_back(closes[j] / closes[j - 1] - 1.0);
  }
  return out;
}

double realized_variance(std::span<const double> r) {
  if (r.empty()) fail(ErrorKind::Dimension, "realized_variance: no returns");
  double s = 0.0;
  for (double x : r) s += x * x;
  return s;
}

std::optional<double> realized_skewness(std::span<const double> r) {
  const double rv = realized_variance(r);
  if (rv == 0.0) return std::nullopt;
  double s3 = 0.0;
  for (double x : r) s3 += x * x * x;
  return std::sqrt(static_cast<double>(r.size())) * s3 / std::pow(rv, 1.5);
}

std::optional<double> realized_kurtosis(std::span<const double> r) {
  const double rv = realized_variance(r);
  if (rv == 0.0) return std::nullopt;
  double s4 = 0.0;
  for (double x : r) s4 += x * x * x * x;
  return static_cast<double>(r.size()) * s4 / (rv * rv);
}

std::optional<double> downside_beta(std::span<const double> r) {
  const double rv = realized_variance(r);
  if (rv == 0.0) return std::nullopt;
  double down = 0.0;
  for (double x : r) {
    if (x < 0.0) down += x * x;
  }
  return down / rv;
}

std::optional<double> trend_strength(std::span<const double> p) {
  if (p.size() < 2) fail(ErrorKind::Dimension, "trend_strength: needs at least 2 prices");
  double path = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) path += std::abs(p[i] - p[i - 1]);
  if (path == 0.0) return std::nullopt;
  return std::clamp((p.back() - p.front()) / path, -1.0, 1.0);
}

FlowResult flow_in_ratio(const FlowInput& in) {
  const std::size_t n = in.close.size();
  if (in.volume.size() != n || in.amount.size() != n || (!in.oi.empty() && in.oi.size() != n)) {
    fail(ErrorKind::Dimension, "flow_in_ratio: volume, close, amount and oi must have equal lengths");
  }
  FlowResult out;
  out.oi_substituted = in.oi.empty();
  if (n < 2) return out;
  const std::vector<double>& flow = in.oi.empty() ? in.volume : in.oi;
  double total_amount = 0.0;
  for (double a : in.amount) total_amount += a;
  double num = 0.0, den = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    num += in.volume[j] * in.close[j] * std::abs(in.close[j] - in.close[j - 1]);
    den += std::abs(flow[j] - flow[j - 1]) * in.close[j];
  }
  if (total_amount == 0.0 || den == 0.0) return out;
  out.value = (num / total_amount) / den;
  return out;
}

namespace {

std::optional<std::size_t> find_field(const std::vector<std::string>& fields, std::string_view name) {
  auto it = std::find(fields.begin(), fields.end(), name);
  if (it == fields.end()) return std::nullopt;
  return static_cast<std::size_t>(it - fields.begin());
}

}  // namespace

FactorRow compute_factors(const data::MultiFreqPanel& panel, const std::vector<std::string>& hf_fields) {
  const auto close_col = find_field(hf_fields, "close");
  const auto volume_col = find_field(hf_fields, "volume");
  if (!close_col || !volume_col) fail(ErrorKind::Data, "compute_factors: needs close and volume fields");
  const auto vwap_col = find_field(hf_fields, "vwap");
  const auto oi_col = find_field(hf_fields, "oi");

  FactorRow row;
  row.date = panel.as_of;
  row.stock_id = panel.stock_id;
  const auto first = panel.first_bar_of_as_of();
  FlowInput flow;
  if (first) {
    const auto ts = panel.timestamps();
    for (std::size_t t = *first; t < panel.n_bars() && timestamp_date(ts[t]) == panel.as_of; ++t) {
      const double c = panel.hf_at(t, *close_col);
      const double v = panel.hf_at(t, *volume_col);
      flow.close.push_back(c);
      flow.volume.push_back(v);
      flow.amount.push_back(v * (vwap_col ? panel.hf_at(t, *vwap_col) : c));
      if (oi_col) flow.oi.push_back(panel.hf_at(t, *oi_col));
    }
  }
  row.n_bars = flow.close.size();
  const auto flow_result = flow_in_ratio(flow);
  row.flow_in_ratio = flow_result.value;
  row.oi_substituted = flow_result.oi_substituted;
  if (row.n_bars >= 2) {
    const auto r = interval_returns(flow.close);
    row.rvar = realized_variance(r);
    row.rskew = realized_skewness(r);
    row.rkurt = realized_kurtosis(r);
    row.downside_beta = downside_beta(r);
    row.trend_strength = trend_strength(flow.close);
  }
  return row;
}

std::vector<FactorRow> compute_factors(const data::CrossSection& cs) {
  std::vector<FactorRow> out;
  out.reserve(cs.panels.size());
  for (const auto& p : cs.panels) out.push_back(compute_factors(p, cs.hf_fields));
  return out;
}

void write_factor_csv(const std::filesystem::path& path, std::span<const FactorRow> rows) {
  auto cell = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  csv::Writer out(path);
  out.row({"date", "stock_id", "n_bars", "rvar", "rskew", "rkurt", "downside_beta", "flow_in_ratio", "trend_strength",
           "oi_source"});
  for (const auto& r : rows) {
    out.row({r.date.to_string(), r.stock_id, std::to_string(r.n_bars), cell(r.rvar), cell(r.rskew), cell(r.rkurt),
             cell(r.downside_beta), cell(r.flow_in_ratio), cell(r.trend_strength),
             r.oi_substituted ? "volume_delta" : "oi"});
  }
  out.close();
}

}  // namespace dspo::features
