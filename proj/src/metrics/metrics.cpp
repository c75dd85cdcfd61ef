#include "dspo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"

namespace dspo::metrics {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean of (i+1 .. j)
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::Dimension, "spearman: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (x.size() < 2) fail(ErrorKind::Dimension, "spearman: needs at least 2 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = 0.5 * (n + 1.0);  // mean rank is exact with average ranks
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> sample_mean(std::span<const double> x) {
  if (x.empty()) return std::nullopt;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::optional<double> sample_std(std::span<const double> x) {
  if (x.size() < 2) return std::nullopt;
  const double mean = *sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

namespace {

std::vector<double> valid_ics(std::span<const DailyEvaluation> daily) {
  std::vector<double> ics;
  for (const auto& d : daily) {
    if (d.rank_ic) ics.push_back(*d.rank_ic);
  }
  return ics;
}

std::optional<double> ratio(std::span<const double> x) {
  // Dispersion at rounding level (e.g. 0.02-0.01 vs 0.03-0.02) counts as constant.
  const auto sd = sample_std(x);
  if (!sd) return std::nullopt;
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (*sd <= 1e-12 * scale) return std::nullopt;
  return *sample_mean(x) / *sd;
}

}  // namespace

std::optional<double> rank_icir(std::span<const DailyEvaluation> daily) { return ratio(valid_ics(daily)); }

RankIcSummary summarize(std::span<const DailyEvaluation> daily) {
  const auto ics = valid_ics(daily);
  RankIcSummary s;
  s.n_days = daily.size();
  s.n_valid = ics.size();
  s.mean = sample_mean(ics);
  s.std = sample_std(ics);
  s.icir = ratio(ics);
  return s;
}

Drawdown max_drawdown(std::span<const double> equity) {
  if (equity.empty()) fail(ErrorKind::Data, "max_drawdown: empty equity series");
  Drawdown dd;
  double peak = equity.front();
  for (double p : equity) {
    peak = std::max(peak, p);
    const double drop = peak - p;
    dd.absolute = std::max(dd.absolute, drop);
    if (peak > 0.0) dd.relative_pct = std::max(dd.relative_pct, 100.0 * drop / peak);
  }
  return dd;
}

std::optional<double> information_ratio(std::span<const double> portfolio, std::span<const double> benchmark) {
  if (portfolio.size() != benchmark.size() || portfolio.size() < 2) {
    fail(ErrorKind::Dimension, "information_ratio: needs two equal-length series of at least 2 returns");
  }
  std::vector<double> excess(portfolio.size());
  for (std::size_t i = 0; i < excess.size(); ++i) excess[i] = portfolio[i] - benchmark[i];
  return ratio(excess);
}

double accumulated_return(std::span<const double> equity) {
  if (equity.empty() || equity.front() == 0.0) fail(ErrorKind::Data, "accumulated_return: empty or zero-start equity");
  return (equity.back() / equity.front() - 1.0) * 100.0;
}

namespace {
std::string cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }
}  // namespace

void write_daily_report(const std::filesystem::path& path, std::span<const DailyEvaluation> daily) {
  csv::Writer out(path);
  out.row({"date", "rank_ic", "n_stocks"});
  for (const auto& d : daily) out.row({d.date.to_string(), cell(d.rank_ic), std::to_string(d.n_stocks)});
  out.close();
}

void write_summary_report(const std::filesystem::path& path, const RankIcSummary& s) {
  csv::Writer out(path);
  out.row({"metric", "value"});
  out.row({"n_days", std::to_string(s.n_days)});
  out.row({"n_valid", std::to_string(s.n_valid)});
  out.row({"rank_ic_mean", cell(s.mean)});
  out.row({"rank_ic_std", cell(s.std)});
  out.row({"rank_icir", cell(s.icir)});
  out.close();
}

}  // namespace dspo::metrics
