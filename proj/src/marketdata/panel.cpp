#include <algorithm>
#include <cmath>
#include <set>

#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"

namespace dspo::data {

std::size_t bars_per_day(std::size_t bar_minutes) {
  if (bar_minutes == 0 || bar_minutes > kSessionMinutes) {
    fail(ErrorKind::Config, "bar_minutes must be in [1, " + std::to_string(kSessionMinutes) + "]");
  }
  return (kSessionMinutes + bar_minutes - 1) / bar_minutes;
}

std::span<const double> MultiFreqPanel::hf() const {
  if (!series) return {};
  return std::span<const double>(series->values).subspan(first * series->n_fields, length * series->n_fields);
}

std::span<const std::int64_t> MultiFreqPanel::timestamps() const {
  if (!series) return {};
  return std::span<const std::int64_t>(series->timestamps).subspan(first, length);
}

Tensor MultiFreqPanel::hf_tensor() const {
  auto values = hf();
  return Tensor({length, n_fields()}, std::vector<double>(values.begin(), values.end()));
}

std::optional<std::size_t> MultiFreqPanel::first_bar_of_as_of() const {
  const auto ts = timestamps();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (timestamp_date(ts[i]) == as_of) return i;
  }
  return std::nullopt;
}

bool MultiFreqPanel::same_content(const MultiFreqPanel& other) const {
  const auto a = hf();
  const auto b = other.hf();
  const auto ta = timestamps();
  const auto tb = other.timestamps();
  return stock_id == other.stock_id && as_of == other.as_of && lf == other.lf &&
         n_fields() == other.n_fields() && std::equal(a.begin(), a.end(), b.begin(), b.end()) &&
         std::equal(ta.begin(), ta.end(), tb.begin(), tb.end());
}

MultiFreqPanel make_panel(std::string stock_id, Date as_of, std::vector<std::int64_t> timestamps,
                          std::vector<double> values, std::size_t n_fields, std::vector<double> lf) {
  if (n_fields == 0 || values.size() != timestamps.size() * n_fields) {
    fail(ErrorKind::Dimension, "panel for " + stock_id + ": " + std::to_string(values.size()) +
                                   " values do not fill " + std::to_string(timestamps.size()) + " bars x " +
                                   std::to_string(n_fields) + " fields");
  }
  auto series = std::make_shared<BarSeries>();
  const std::size_t n = timestamps.size();
  series->timestamps = std::move(timestamps);
  series->values = std::move(values);
  series->n_fields = n_fields;
  return MultiFreqPanel{std::move(stock_id), as_of, std::move(series), 0, n, std::move(lf)};
}

std::size_t CrossSection::hf_field_index(std::string_view name) const {
  for (std::size_t i = 0; i < hf_fields.size(); ++i) {
    if (hf_fields[i] == name) return i;
  }
  fail(ErrorKind::Data, "cross-section " + date.to_string() + " has no hf field '" + std::string(name) + "'");
}

void CrossSection::validate() const {
  const std::string where = "cross-section " + date.to_string();
  if (panels.size() != returns.size()) {
    fail(ErrorKind::Data, where + ": " + std::to_string(panels.size()) + " panels but " +
                              std::to_string(returns.size()) + " returns");
  }
  if (panels.size() < 2) fail(ErrorKind::Data, where + ": needs at least 2 stocks");
  std::set<std::string_view> ids;
  for (const auto& p : panels) {
    if (!ids.insert(p.stock_id).second) fail(ErrorKind::Data, where + ": duplicate stock id " + p.stock_id);
    if (p.n_fields() != hf_fields.size() || p.lf.size() != lf_fields.size()) {
      fail(ErrorKind::Data, where + ": panel " + p.stock_id + " width disagrees with field lists");
    }
  }
  for (double r : returns) {
    if (!std::isfinite(r)) fail(ErrorKind::Data, where + ": non-finite forward return");
  }
}

bool CrossSection::same_content(const CrossSection& other) const {
  if (date != other.date || hf_fields != other.hf_fields || lf_fields != other.lf_fields ||
      returns != other.returns || panels.size() != other.panels.size()) {
    return false;
  }
  for (std::size_t i = 0; i < panels.size(); ++i) {
    if (!panels[i].same_content(other.panels[i])) return false;
  }
  return true;
}

void validate_panel(const MultiFreqPanel& panel, const std::vector<std::string>& hf_fields,
                    std::optional<std::size_t> expected_bars) {
  const std::string where = "panel " + panel.stock_id + " @ " + panel.as_of.to_string();
  if (expected_bars && panel.n_bars() != *expected_bars) {
    fail(ErrorKind::Data, where + ": " + std::to_string(panel.n_bars()) + " bars, expected " +
                              std::to_string(*expected_bars));
  }
  auto index = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < hf_fields.size(); ++i) {
      if (hf_fields[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto o = index("open"), h = index("high"), l = index("low"), c = index("close"), v = index("volume");
  for (std::size_t t = 0; t < panel.n_bars(); ++t) {
    for (std::size_t f = 0; f < panel.n_fields(); ++f) {
      if (!std::isfinite(panel.hf_at(t, f))) fail(ErrorKind::Data, where + ": non-finite value at bar " + std::to_string(t));
    }
    if (o && h && l && c) {
      const double op = panel.hf_at(t, *o), hi = panel.hf_at(t, *h), lo = panel.hf_at(t, *l), cl = panel.hf_at(t, *c);
      if (hi < std::max(op, cl) || std::min(op, cl) < lo) {
        fail(ErrorKind::Data, where + ": OHLC ordering violated at bar " + std::to_string(t));
      }
    }
    if (v && panel.hf_at(t, *v) < 0.0) fail(ErrorKind::Data, where + ": negative volume at bar " + std::to_string(t));
  }
  for (double x : panel.lf) {
    if (!std::isfinite(x)) fail(ErrorKind::Data, where + ": non-finite low-frequency value");
  }
}

CrossSection filter_tradable(const CrossSection& cs) {
  const std::size_t volume = cs.hf_field_index("volume");
  CrossSection out;
  out.date = cs.date;
  out.hf_fields = cs.hf_fields;
  out.lf_fields = cs.lf_fields;
  for (std::size_t i = 0; i < cs.panels.size(); ++i) {
    const auto& p = cs.panels[i];
    double total = 0.0;
    for (std::size_t t = 0; t < p.n_bars(); ++t) total += p.hf_at(t, volume);
    if (total > 0.0) {
      out.panels.push_back(p);
      out.returns.push_back(cs.returns[i]);
    }
  }
  if (out.panels.size() < 2) {
    fail(ErrorKind::Data, "cross-section " + cs.date.to_string() + ": only " + std::to_string(out.panels.size()) +
                              " tradable stocks after filtering");
  }
  return out;
}

std::vector<CrossSection> select_dates(std::span<const CrossSection> days, std::optional<Date> from,
                                       std::optional<Date> to) {
  std::vector<CrossSection> out;
  for (const auto& d : days) {
    if ((!from || d.date >= *from) && (!to || d.date <= *to)) out.push_back(d);
  }
  return out;
}

}  // namespace dspo::data
