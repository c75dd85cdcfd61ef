#include "dspo/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"
#include "dspo/metrics.hpp"

namespace dspo::backtest {

std::string mode_name(Mode m) { return m == Mode::LongOnly ? "long-only" : "long-short"; }

Mode parse_mode(std::string_view s) {
  if (s == "long-only") return Mode::LongOnly;
  if (s == "long-short") return Mode::LongShort;
  fail(ErrorKind::Config, "mode must be long-only or long-short, got '" + std::string(s) + "'");
}

std::string commission_basis_name(CommissionBasis b) {
  return b == CommissionBasis::PerShare ? "per-share" : "notional";
}

CommissionBasis parse_commission_basis(std::string_view s) {
  if (s == "notional") return CommissionBasis::Notional;
  if (s == "per-share") return CommissionBasis::PerShare;
  fail(ErrorKind::Config, "commission_basis must be notional or per-share, got '" + std::string(s) + "'");
}

void ExecutionConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "backtest: " + what); };
  auto rate = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (commission_basis == CommissionBasis::Notional ? !rate(commission_rate)
                                                    : !(commission_rate >= 0.0 && std::isfinite(commission_rate))) {
    bad("commission_rate must be in [0, 1] (notional) or a non-negative amount (per-share)");
  }
  if (!rate(volume_limit)) bad("volume_limit must be in [0, 1]");
  if (!rate(impact_coeff)) bad("impact_coeff must be in [0, 1]");
  if (!(decile > 0.0 && decile <= 0.5)) bad("decile must be in (0, 0.5]");
  if (!(initial_capital > 0.0) || !std::isfinite(initial_capital)) bad("initial_capital must be positive");
}

TargetPortfolio build_portfolio(std::span<const ScoredStock> scores, const ExecutionConfig& config) {
  const std::size_t n = scores.size();
  if (n < 2) fail(ErrorKind::Data, "build_portfolio: needs at least 2 scored stocks");
  std::vector<const ScoredStock*> order;
  std::set<std::string_view> ids;
  for (const auto& s : scores) {
    if (!ids.insert(s.stock_id).second) fail(ErrorKind::Data, "build_portfolio: duplicate stock id " + s.stock_id);
    if (!std::isfinite(s.score)) fail(ErrorKind::Data, "build_portfolio: non-finite score for " + s.stock_id);
    order.push_back(&s);
  }
  std::sort(order.begin(), order.end(), [](const ScoredStock* a, const ScoredStock* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->stock_id < b->stock_id;
  });
  const std::size_t per_leg =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.decile + 1e-9)));
  const bool long_short = config.mode == Mode::LongShort;
  TargetPortfolio out;
  const double leg_gross = long_short ? 0.5 : 1.0;
  const double long_gross = long_short && config.reinvest_short_proceeds ? 1.0 : leg_gross;
  for (std::size_t i = 0; i < per_leg; ++i) out.weights[order[i]->stock_id] = long_gross / static_cast<double>(per_leg);
  out.ties_at_cutoff = per_leg < n && order[per_leg - 1]->score == order[per_leg]->score;
  if (long_short) {
    for (std::size_t i = n - per_leg; i < n; ++i) {
      out.weights[order[i]->stock_id] = -leg_gross / static_cast<double>(per_leg);
    }
    const std::size_t first_short = n - per_leg;
    if (first_short > 0 && order[first_short - 1]->score == order[first_short]->score) out.ties_at_cutoff = true;
  }
  return out;
}

double mark_to_market(const Book& book, const MarketDay& day) {
  double equity = book.cash;
  for (const auto& [id, shares] : book.shares) {
    auto bar = day.bars.find(id);
    if (bar != day.bars.end()) {
      equity += shares * bar->second.open;
    } else {
      auto last = book.last_price.find(id);
      if (last == book.last_price.end()) fail(ErrorKind::Data, "no price has been seen for held stock " + id);
      equity += shares * last->second;
    }
  }
  return equity;
}

double execute_day(Book& book, const TargetPortfolio& targets, const MarketDay& day, const ExecutionConfig& config,
                   std::vector<Fill>& fills, std::vector<std::string>& warnings) {
  const double equity = mark_to_market(book, day);
  for (const auto& [id, bar] : day.bars) book.last_price[id] = bar.open;
  const std::string date = day.date.to_string();

  std::set<std::string> universe;
  for (const auto& [id, shares] : book.shares) universe.insert(id);
  for (const auto& [id, w] : targets.weights) universe.insert(id);

  double notional = 0.0;
  for (const std::string& id : universe) {
    const double held = book.shares.count(id) ? book.shares.at(id) : 0.0;
    auto w = targets.weights.find(id);
    const double weight = w != targets.weights.end() ? w->second : 0.0;
    auto bar = day.bars.find(id);
    if (bar == day.bars.end()) {
      warnings.push_back(date + " " + id + ": no opening bar; trade skipped, position marked at last price");
      continue;
    }
    const double open = bar->second.open;
    if (!(open > 0.0)) {
      warnings.push_back(date + " " + id + ": non-positive open; trade skipped");
      continue;
    }
    const double desired = weight * equity / open - held;
    if (desired == 0.0) continue;
    double fill = desired;
    double ratio = 0.0;
    if (!config.unlimited_volume) {
      const double cap = config.volume_limit * bar->second.volume;
      if (!(cap > 0.0)) {
        warnings.push_back(date + " " + id + ": no tradable volume; order dropped");
        continue;
      }
      fill = std::copysign(std::min(std::abs(desired), cap), desired);
      ratio = std::abs(fill) / cap;
      if (std::abs(fill) < std::abs(desired)) {
        warnings.push_back(date + " " + id + ": volume cap filled " + csv::format_double(fill) + " of " +
                           csv::format_double(desired) + " shares; remainder " +
                           (config.carry_unfilled ? "carried" : "dropped"));
      }
    }
    const double side = fill > 0.0 ? 1.0 : -1.0;
    const double price = open * (1.0 + side * config.impact_coeff * ratio * ratio);
    const double traded = std::abs(fill * price);
    const double fee =
        config.commission_rate * (config.commission_basis == CommissionBasis::PerShare ? std::abs(fill) : traded);
    book.cash -= fill * price + fee;
    const double after = held + fill;
    if (after == 0.0) {
      book.shares.erase(id);
    } else {
      book.shares[id] = after;
    }
    notional += traded;
    fills.push_back({day.date, id, desired, fill, price, fee});
  }
  return notional;
}

BacktestLedger run_backtest(const std::map<Date, std::vector<ScoredStock>>& scores_by_day,
                            std::span<const MarketDay> market, const ExecutionConfig& config) {
  config.validate();
  for (std::size_t j = 1; j < market.size(); ++j) {
    if (!(market[j - 1].date < market[j].date)) {
      fail(ErrorKind::Data, "run_backtest: market days must be strictly increasing at " + market[j].date.to_string());
    }
  }
  BacktestLedger ledger;
  std::set<Date> market_dates;
  for (const auto& d : market) market_dates.insert(d.date);
  for (const auto& [date, _] : scores_by_day) {
    if (!market_dates.count(date)) ledger.warnings.push_back(date.to_string() + ": scores for a date without market data ignored");
  }

  Book book;
  book.cash = config.initial_capital;
  bool started = false;
  std::optional<TargetPortfolio> carried;
  for (std::size_t j = 0; j + 1 < market.size(); ++j) {
    auto scores = scores_by_day.find(market[j].date);
    const bool has_scores = scores != scores_by_day.end();
    if (!started && !has_scores) continue;
    if (!started) {
      started = true;
      ledger.equity.push_back({market[j].date, config.initial_capital, config.initial_capital, 0.0});
    }
    const MarketDay& next = market[j + 1];
    double turnover = 0.0;
    if (has_scores) {
      const TargetPortfolio targets = build_portfolio(scores->second, config);
      if (targets.ties_at_cutoff) {
        ++ledger.tie_days;
        ledger.warnings.push_back(market[j].date.to_string() + ": tied scores at the selection cutoff; ids decide");
      }
      const double pre = mark_to_market(book, next);
      const double notional = execute_day(book, targets, next, config, ledger.fills, ledger.warnings);
      turnover = pre > 0.0 ? notional / pre : 0.0;
      if (config.carry_unfilled) carried = targets;
    } else if (carried) {
      const double pre = mark_to_market(book, next);
      const double notional = execute_day(book, *carried, next, config, ledger.fills, ledger.warnings);
      turnover = pre > 0.0 ? notional / pre : 0.0;
    } else {
      for (const auto& [id, bar] : next.bars) book.last_price[id] = bar.open;
    }
    ledger.holdings[next.date] = book.shares;
    ledger.equity.push_back({next.date, mark_to_market(book, next), book.cash, turnover});
  }
  return ledger;
}

std::vector<double> portfolio_returns(const BacktestLedger& ledger) {
  std::vector<double> out;
  for (std::size_t i = 1; i < ledger.equity.size(); ++i) {
    out.push_back(ledger.equity[i].equity / ledger.equity[i - 1].equity - 1.0);
  }
  return out;
}

std::vector<double> benchmark_returns(const BacktestLedger& ledger, std::span<const MarketDay> market) {
  std::map<Date, const MarketDay*> by_date;
  for (const auto& d : market) by_date[d.date] = &d;
  std::vector<double> out;
  for (std::size_t i = 1; i < ledger.equity.size(); ++i) {
    const auto a = by_date.find(ledger.equity[i - 1].date);
    const auto b = by_date.find(ledger.equity[i].date);
    double total = 0.0;
    std::size_t n = 0;
    if (a != by_date.end() && b != by_date.end()) {
      for (const auto& [id, bar] : a->second->bars) {
        auto other = b->second->bars.find(id);
        if (other == b->second->bars.end() || !(bar.open > 0.0)) continue;
        total += other->second.open / bar.open - 1.0;
        ++n;
      }
    }
    out.push_back(n ? total / static_cast<double>(n) : 0.0);
  }
  return out;
}

BacktestSummary summarize(const BacktestLedger& ledger, std::span<const MarketDay> market) {
  BacktestSummary s;
  s.tie_days = ledger.tie_days;
  if (ledger.equity.empty()) return s;
  std::vector<double> equity;
  for (const auto& r : ledger.equity) equity.push_back(r.equity);
  s.accumulated_return_pct = metrics::accumulated_return(equity);
  const auto dd = metrics::max_drawdown(equity);
  s.mdd_absolute = dd.absolute;
  s.mdd_pct = dd.relative_pct;
  const auto port = portfolio_returns(ledger);
  const auto bench = benchmark_returns(ledger, market);
  if (port.size() >= 2) s.information_ratio = metrics::information_ratio(port, bench);
  s.n_days = ledger.equity.size() - 1;
  double turnover = 0.0;
  for (std::size_t i = 1; i < ledger.equity.size(); ++i) turnover += ledger.equity[i].turnover;
  if (s.n_days) s.mean_turnover = turnover / static_cast<double>(s.n_days);
  for (const auto& f : ledger.fills) s.total_fees += f.fee;
  return s;
}

std::vector<MarketDay> market_from_cross_sections(std::span<const data::CrossSection> days) {
  std::vector<MarketDay> out;
  for (const auto& cs : days) {
    const std::size_t open = cs.hf_field_index("open");
    const std::size_t volume = cs.hf_field_index("volume");
    MarketDay day{cs.date, {}};
    for (const auto& p : cs.panels) {
      const auto bar = p.first_bar_of_as_of();
      if (!bar) continue;
      day.bars[p.stock_id] = {p.hf_at(*bar, open), p.hf_at(*bar, volume)};
    }
    out.push_back(std::move(day));
  }
  std::sort(out.begin(), out.end(), [](const MarketDay& a, const MarketDay& b) { return a.date < b.date; });
  return out;
}

std::vector<MarketDay> load_market_csv(const std::filesystem::path& path) {
  csv::Reader reader(path);
  const csv::Row header = reader.header();
  const std::size_t date_col = csv::require_column(header, "date", reader.path());
  const std::size_t id_col = csv::require_column(header, "stock_id", reader.path());
  const std::size_t open_col = csv::require_column(header, "open", reader.path());
  const std::size_t vol_col = csv::require_column(header, "volume", reader.path());
  std::map<Date, MarketDay> days;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() != header.size()) reader.error("wrong number of fields");
    Date date;
    try {
      date = Date::parse(row[date_col]);
    } catch (const Error& e) {
      reader.error(e.what());
    }
    auto& day = days[date];
    day.date = date;
    const OpenBar bar{csv::parse_double(row[open_col], reader), csv::parse_double(row[vol_col], reader)};
    if (bar.volume < 0.0) reader.error("negative volume");
    if (!day.bars.emplace(row[id_col], bar).second) reader.error("duplicate stock " + row[id_col] + " on " + row[date_col]);
  }
  std::vector<MarketDay> out;
  for (auto& [_, d] : days) out.push_back(std::move(d));
  return out;
}

std::map<Date, std::vector<ScoredStock>> load_scores_csv(const std::filesystem::path& path) {
  csv::Reader reader(path);
  const csv::Row header = reader.header();
  const std::size_t date_col = csv::require_column(header, "date", reader.path());
  const std::size_t id_col = csv::require_column(header, "stock_id", reader.path());
  const std::size_t score_col = csv::require_column(header, "score", reader.path());
  std::map<Date, std::vector<ScoredStock>> out;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() != header.size()) reader.error("wrong number of fields");
    Date date;
    try {
      date = Date::parse(row[date_col]);
    } catch (const Error& e) {
      reader.error(e.what());
    }
    out[date].push_back({row[id_col], csv::parse_double(row[score_col], reader)});
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, const std::map<Date, std::vector<ScoredStock>>& scores) {
  csv::Writer out(path);
  out.row({"date", "stock_id", "score"});
  for (const auto& [date, day] : scores) {
    const std::string d = date.to_string();
    for (const auto& s : day) out.row({d, s.stock_id, csv::format_double(s.score)});
  }
  out.close();
}

void write_equity_csv(const std::filesystem::path& path, const BacktestLedger& ledger) {
  csv::Writer out(path);
  out.row({"date", "equity", "cash", "turnover"});
  for (const auto& r : ledger.equity) {
    out.row({r.date.to_string(), csv::format_double(r.equity), csv::format_double(r.cash), csv::format_double(r.turnover)});
  }
  out.close();
}

void write_fills_csv(const std::filesystem::path& path, const BacktestLedger& ledger) {
  csv::Writer out(path);
  out.row({"date", "stock_id", "desired", "shares", "price", "fee"});
  for (const auto& f : ledger.fills) {
    out.row({f.date.to_string(), f.stock_id, csv::format_double(f.desired), csv::format_double(f.shares),
             csv::format_double(f.price), csv::format_double(f.fee)});
  }
  out.close();
}

void write_summary_csv(const std::filesystem::path& path, const BacktestSummary& s) {
  csv::Writer out(path);
  out.row({"metric", "value"});
  out.row({"accumulated_return_pct", csv::format_double(s.accumulated_return_pct)});
  out.row({"information_ratio", s.information_ratio ? csv::format_double(*s.information_ratio) : std::string()});
  out.row({"mdd_absolute", csv::format_double(s.mdd_absolute)});
  out.row({"mdd_pct", csv::format_double(s.mdd_pct)});
  out.row({"mean_turnover", csv::format_double(s.mean_turnover)});
  out.row({"total_fees", csv::format_double(s.total_fees)});
  out.row({"n_days", std::to_string(s.n_days)});
  out.row({"tie_days", std::to_string(s.tie_days)});
  out.close();
}

}  // namespace dspo::backtest
