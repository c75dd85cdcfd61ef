#include "dspo/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dspo/backtest.hpp"
#include "dspo/csv.hpp"
#include "dspo/error.hpp"
#include "dspo/features.hpp"
#include "dspo/marketdata.hpp"
#include "dspo/metrics.hpp"
#include "dspo/model.hpp"
#include "dspo/train.hpp"

namespace dspo::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

KeyValues parse_config_text(std::string_view text, const std::string& origin) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) fail(ErrorKind::Config, origin + ":" + std::to_string(line_no) + ": empty key");
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

KeyValues load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Settings

const std::string* Settings::find(const std::string& key) {
  used_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string Settings::text(const std::string& key, const std::string& fallback) {
  const std::string* v = find(key);
  const std::string out = v ? *v : fallback;
  resolved_[key] = out;
  return out;
}

std::optional<std::string> Settings::optional_text(const std::string& key) {
  const std::string* v = find(key);
  if (!v || v->empty()) return std::nullopt;
  resolved_[key] = *v;
  return *v;
}

std::uint64_t Settings::integer(const std::string& key, std::uint64_t fallback) {
  const std::string* v = find(key);
  std::uint64_t out = fallback;
  if (v) {
    try {
      std::size_t used = 0;
      if (v->empty() || (*v)[0] == '-') throw std::invalid_argument(key);
      out = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "'" + key + "' must be a non-negative integer, got '" + *v + "'");
    }
  }
  resolved_[key] = std::to_string(out);
  return out;
}

std::size_t Settings::count(const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(integer(key, fallback));
}

double Settings::real(const std::string& key, double fallback) {
  const std::string* v = find(key);
  double out = fallback;
  if (v) {
    try {
      std::size_t used = 0;
      out = std::stod(*v, &used);
      if (used != v->size() || !std::isfinite(out)) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "'" + key + "' must be a finite number, got '" + *v + "'");
    }
  }
  resolved_[key] = csv::format_double(out);
  return out;
}

bool Settings::flag(const std::string& key, bool fallback) {
  const std::string* v = find(key);
  bool out = fallback;
  if (v) {
    if (*v == "true" || *v == "1" || *v == "yes") {
      out = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      out = false;
    } else {
      fail(ErrorKind::Config, "'" + key + "' must be true or false, got '" + *v + "'");
    }
  }
  resolved_[key] = out ? "true" : "false";
  return out;
}

void Settings::finish(const std::string& command) const {
  std::vector<std::string> unknown;
  for (const auto& [key, _] : values_) {
    if (!used_.count(key)) unknown.push_back(key);
  }
  if (!unknown.empty()) fail(ErrorKind::Config, command + ": unknown config key(s): " + join(unknown, ','));
}

int exit_code_for(std::string_view kind) {
  if (kind == kind_name(ErrorKind::Config) || kind == "UsageError") return 2;
  if (kind == kind_name(ErrorKind::Data)) return 3;
  if (kind == kind_name(ErrorKind::Io)) return 4;
  if (kind == kind_name(ErrorKind::Dimension)) return 5;
  if (kind == kind_name(ErrorKind::Numeric)) return 6;
  return 1;
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Run {
 public:
  Run(const RunOptions& options, std::string command)
      : settings_(options.config), options_(options), command_(std::move(command)) {
    if (options.out.empty()) fail(ErrorKind::Config, command_ + ": an output directory is required");
    if (options.timestamp) header_ = "generated by dspo " + command_ + " " + utc_now();
    seed_ = settings_.integer("seed", options.seed);
  }

  Settings& settings() { return settings_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& header() const { return header_; }

  // Validates keys and creates the output directory; call after all reads.
  void begin() {
    settings_.finish(command_);
    std::error_code ec;
    fs::create_directories(options_.out, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory " + options_.out.string() + ": " + ec.message());
    std::ofstream cfg(path("resolved_config.txt"), std::ios::binary);
    if (!cfg) fail(ErrorKind::Io, "cannot write " + path("resolved_config.txt").string());
    if (!header_.empty()) cfg << "# " << header_ << "\n";
    cfg << "# command = " << command_ << "\n";
    for (const auto& [key, value] : settings_.resolved()) cfg << key << " = " << value << "\n";
    if (!cfg.flush()) fail(ErrorKind::Io, "cannot write " + path("resolved_config.txt").string());
  }

  fs::path path(const std::string& name) const { return options_.out / name; }

  // Prepends the timestamp comment to a freshly written CSV.
  void stamp(const fs::path& file) const {
    if (header_.empty()) return;
    std::string body;
    {
      std::ifstream in(file, std::ios::binary);
      if (!in) fail(ErrorKind::Io, "cannot reopen " + file.string());
      std::stringstream buf;
      buf << in.rdbuf();
      body = buf.str();
    }
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << "# " << header_ << "\n" << body;
    if (!out.flush()) fail(ErrorKind::Io, "cannot write " + file.string());
  }

 private:
  Settings settings_;
  const RunOptions& options_;
  std::string command_;
  std::string header_;
  std::uint64_t seed_ = 0;
};

std::optional<Date> date_key(Settings& s, const std::string& key) {
  const auto v = s.optional_text(key);
  if (!v) return std::nullopt;
  try {
    return Date::parse(*v);
  } catch (const Error&) {
    fail(ErrorKind::Config, "'" + key + "' must be a YYYY-MM-DD date, got '" + *v + "'");
  }
}

fs::path required_path(Settings& s, const std::string& key, const std::string& command) {
  const auto v = s.optional_text(key);
  if (!v) fail(ErrorKind::Config, command + ": '" + key + "' is required");
  return *v;
}

std::vector<data::CrossSection> load_range(const fs::path& dir, std::optional<Date> from, std::optional<Date> to) {
  const auto all = data::load_csv(dir);
  auto days = data::select_dates(all, from, to);
  if (days.empty()) fail(ErrorKind::Data, "no dates of " + dir.string() + " fall in the requested range");
  return days;
}

std::vector<data::CrossSection> tradable(std::span<const data::CrossSection> days) {
  std::vector<data::CrossSection> out;
  out.reserve(days.size());
  for (const auto& d : days) out.push_back(data::filter_tradable(d));
  return out;
}

struct Scorer {
  model::Checkpoint checkpoint;
  data::NormalizationState normalizer;
};

Scorer load_scorer(Settings& s, const std::string& command) {
  const fs::path ckpt = required_path(s, "checkpoint", command);
  const auto norm = s.optional_text("normalizer");
  const fs::path norm_path = norm ? fs::path(*norm) : ckpt.parent_path() / "normalizer.csv";
  s.text("normalizer", norm_path.string());
  return {model::load_checkpoint(ckpt), {}};
}

void finish_scorer(Scorer& scorer, const fs::path& norm_path) {
  scorer.normalizer = data::load_normalizer(norm_path);
  const auto& mc = scorer.checkpoint.params.config();
  if (mc.hf_fields != scorer.normalizer.hf_fields.size() || mc.lf_fields != scorer.normalizer.lf_fields.size()) {
    fail(ErrorKind::Data, "checkpoint expects " + std::to_string(mc.hf_fields) + " hf and " +
                              std::to_string(mc.lf_fields) + " lf fields but the normalizer keeps " +
                              std::to_string(scorer.normalizer.hf_fields.size()) + " and " +
                              std::to_string(scorer.normalizer.lf_fields.size()));
  }
}

struct ScoredDay {
  Date date;
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<double> returns;
};

std::vector<ScoredDay> score_days(const Scorer& scorer, std::span<const data::CrossSection> raw_days) {
  std::vector<ScoredDay> out;
  out.reserve(raw_days.size());
  for (const auto& raw : raw_days) {
    const auto cs = data::apply_normalizer(scorer.normalizer, data::filter_tradable(raw));
    ScoredDay day;
    day.date = cs.date;
    for (const auto& p : cs.panels) day.ids.push_back(p.stock_id);
    day.scores = model::predict(scorer.checkpoint.params, cs);
    day.returns = cs.returns;
    out.push_back(std::move(day));
  }
  return out;
}

std::map<Date, std::vector<backtest::ScoredStock>> as_score_map(const std::vector<ScoredDay>& days) {
  std::map<Date, std::vector<backtest::ScoredStock>> out;
  for (const auto& d : days) {
    auto& row = out[d.date];
    for (std::size_t i = 0; i < d.ids.size(); ++i) row.push_back({d.ids[i], d.scores[i]});
  }
  return out;
}

data::ReturnHorizon parse_horizon(const std::string& s) {
  if (s == "next-open") return data::ReturnHorizon::NextOpenToFollowingOpen;
  if (s == "close-to-close") return data::ReturnHorizon::CloseToNextClose;
  fail(ErrorKind::Config, "horizon must be next-open or close-to-close, got '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// generate

void cmd_generate(const RunOptions& options) {
  Run run(options, "generate");
  auto& s = run.settings();
  data::GeneratorConfig g;
  g.n_stocks = s.count("n_stocks", g.n_stocks);
  g.n_days = s.count("n_days", g.n_days);
  g.bar_minutes = s.count("bar_minutes", g.bar_minutes);
  g.window_days = s.count("window_days", g.window_days);
  g.n_latent = s.count("n_latent", g.n_latent);
  g.noise = s.real("noise", g.noise);
  g.return_scale = s.real("return_scale", g.return_scale);
  g.noise_dof = s.real("noise_dof", g.noise_dof);
  g.market_vol = s.real("market_vol", g.market_vol);
  g.volume_loading = s.real("volume_loading", g.volume_loading);
  g.volume_noise = s.real("volume_noise", g.volume_noise);
  g.volatility_loading = s.real("volatility_loading", g.volatility_loading);
  g.n_lf_fields = s.count("n_lf_fields", g.n_lf_fields);
  g.lf_noise = s.real("lf_noise", g.lf_noise);
  g.halted_stocks = s.count("halted_stocks", g.halted_stocks);
  g.horizon = parse_horizon(s.text("horizon", "next-open"));
  const auto start = date_key(s, "start");
  if (start) g.start = *start;
  s.text("start", g.start.to_string());
  g.validate();
  run.begin();

  const auto market = data::generate_synthetic_market(g, run.seed());
  data::CsvWriteOptions csv_options;
  csv_options.header_comment = run.header();
  data::write_csv(options.out, market.days, &market.latent_scores, csv_options);
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const RunOptions& options) {
  Run run(options, "train");
  auto& s = run.settings();
  const fs::path data_dir = required_path(s, "data", "train");
  const auto train_from = date_key(s, "train_from");
  const auto train_to = date_key(s, "train_to");
  const auto val_from = date_key(s, "val_from");
  const auto val_to = date_key(s, "val_to");
  const std::size_t val_days = s.count("val_days", 0);

  model::ModelConfig mc;
  mc.d = s.count("d", mc.d);
  mc.conv_layers = s.count("conv_layers", mc.conv_layers);
  mc.kernel = s.count("kernel", mc.kernel);
  mc.stride = s.count("stride", mc.stride);
  mc.conv_channels = s.count("conv_channels", mc.conv_channels);
  mc.mlp_hidden = s.count("mlp_hidden", mc.mlp_hidden);
  mc.seed = run.seed();

  train::TrainConfig tc;
  tc.k = s.count("k", tc.k);
  tc.m = s.count("m", tc.m);
  tc.epochs = s.count("epochs", tc.epochs);
  tc.lr = s.real("lr", tc.lr);
  tc.beta1 = s.real("beta1", tc.beta1);
  tc.beta2 = s.real("beta2", tc.beta2);
  tc.eps = s.real("eps", tc.eps);
  tc.clip = s.real("clip", tc.clip);
  tc.weight_decay = s.real("weight_decay", tc.weight_decay);
  tc.warmup_steps = s.count("warmup_steps", tc.warmup_steps);
  tc.scale = s.real("scale", tc.scale);
  tc.objective = train::parse_objective(s.text("objective", train::objective_name(tc.objective)));
  tc.selection = train::parse_selection(s.text("selection", train::selection_name(tc.selection)));
  tc.seed = run.seed();
  tc.validate();

  const bool explicit_val = val_from || val_to;
  if (explicit_val && val_days) fail(ErrorKind::Config, "train: use either val_from/val_to or val_days, not both");
  run.begin();

  const auto all = data::load_csv(data_dir);
  std::vector<data::CrossSection> train_raw, val_raw;
  if (explicit_val) {
    train_raw = data::select_dates(all, train_from, train_to);
    val_raw = data::select_dates(all, val_from, val_to);
  } else {
    auto pool = data::select_dates(all, train_from, train_to);
    if (val_days >= pool.size()) {
      fail(ErrorKind::Config, "train: val_days must leave at least one training day (have " +
                                  std::to_string(pool.size()) + " days)");
    }
    val_raw.assign(pool.end() - static_cast<std::ptrdiff_t>(val_days), pool.end());
    pool.resize(pool.size() - val_days);
    train_raw = std::move(pool);
  }
  if (train_raw.empty()) fail(ErrorKind::Data, "train: no training days in the requested range");

  const auto train_tradable = tradable(train_raw);
  const auto normalizer = data::fit_normalizer(train_tradable);
  const auto train_days = data::apply_normalizer(normalizer, train_tradable);
  const auto val_days_norm = data::apply_normalizer(normalizer, tradable(val_raw));

  mc.hf_fields = normalizer.hf_fields.size();
  mc.lf_fields = normalizer.lf_fields.size();
  mc.validate();
  const auto result = train::train(model::ModelParams::init(mc), train_days, val_days_norm, tc);

  std::map<std::string, std::string> meta = tc.to_map();
  meta["selected_step"] = std::to_string(result.selected_step);
  meta["val_rankic"] = result.selected_val_rankic ? csv::format_double(*result.selected_val_rankic) : "";
  meta["train_from"] = train_raw.front().date.to_string();
  meta["train_to"] = train_raw.back().date.to_string();
  meta["hf_fields"] = join(normalizer.hf_fields, ';');
  meta["lf_fields"] = join(normalizer.lf_fields, ';');
  model::save_checkpoint(run.path("model.ckpt"), result.selected, meta);
  meta["selected_step"] = result.log.empty() ? "0" : std::to_string(result.log.back().step);
  model::save_checkpoint(run.path("model_final.ckpt"), result.final_params, meta);

  data::save_normalizer(run.path("normalizer.csv"), normalizer);
  run.stamp(run.path("normalizer.csv"));
  train::write_log_csv(run.path("train_log.csv"), result.log);
  run.stamp(run.path("train_log.csv"));

  {
    csv::Writer out(run.path("train_summary.csv"));
    out.row({"metric", "value"});
    out.row({"train_days", std::to_string(train_days.size())});
    out.row({"val_days", std::to_string(val_days_norm.size())});
    out.row({"steps", std::to_string(result.log.empty() ? 0 : result.log.back().step)});
    out.row({"selected_step", std::to_string(result.selected_step)});
    out.row({"selected_val_rankic",
             result.selected_val_rankic ? csv::format_double(*result.selected_val_rankic) : ""});
    out.row({"rejected_steps", std::to_string(result.rejected_steps)});
    out.row({"parameters", std::to_string(result.selected.parameter_count())});
    out.close();
  }
  run.stamp(run.path("train_summary.csv"));
  if (!normalizer.warnings.empty()) {
    std::ofstream w(run.path("warnings.txt"), std::ios::binary);
    for (const auto& line : normalizer.warnings) w << line << "\n";
  }
}

// ---------------------------------------------------------------------------
// evaluate

void cmd_evaluate(const RunOptions& options) {
  Run run(options, "evaluate");
  auto& s = run.settings();
  const fs::path data_dir = required_path(s, "data", "evaluate");
  const auto from = date_key(s, "from");
  const auto to = date_key(s, "to");
  Scorer scorer = load_scorer(s, "evaluate");
  const fs::path norm_path = s.resolved().at("normalizer");
  run.begin();
  finish_scorer(scorer, norm_path);

  const auto days = score_days(scorer, load_range(data_dir, from, to));
  std::vector<metrics::DailyEvaluation> daily;
  for (const auto& d : days) daily.push_back({d.date, metrics::spearman(d.scores, d.returns), d.ids.size()});

  backtest::write_scores_csv(run.path("scores.csv"), as_score_map(days));
  run.stamp(run.path("scores.csv"));
  metrics::write_daily_report(run.path("daily_rankic.csv"), daily);
  run.stamp(run.path("daily_rankic.csv"));
  metrics::write_summary_report(run.path("summary.csv"), metrics::summarize(daily));
  run.stamp(run.path("summary.csv"));
}

// ---------------------------------------------------------------------------
// backtest

void cmd_backtest(const RunOptions& options) {
  Run run(options, "backtest");
  auto& s = run.settings();
  const auto data_dir = s.optional_text("data");
  const auto market_file = s.optional_text("market");
  const auto scores_file = s.optional_text("scores");
  const auto from = date_key(s, "from");
  const auto to = date_key(s, "to");
  backtest::ExecutionConfig ec;
  ec.commission_rate = s.real("commission_rate", ec.commission_rate);
  ec.volume_limit = s.real("volume_limit", ec.volume_limit);
  ec.impact_coeff = s.real("impact_coeff", ec.impact_coeff);
  ec.initial_capital = s.real("initial_capital", ec.initial_capital);
  ec.mode = backtest::parse_mode(s.text("mode", backtest::mode_name(ec.mode)));
  ec.decile = s.real("decile", ec.decile);
  ec.unlimited_volume = s.flag("unlimited_volume", ec.unlimited_volume);
  ec.commission_basis =
      backtest::parse_commission_basis(s.text("commission_basis", backtest::commission_basis_name(ec.commission_basis)));
  ec.carry_unfilled = s.flag("carry_unfilled", ec.carry_unfilled);
  ec.reinvest_short_proceeds = s.flag("reinvest_short_proceeds", ec.reinvest_short_proceeds);
  ec.validate();

  if (!data_dir && !market_file) fail(ErrorKind::Config, "backtest: 'data' or 'market' is required");
  if (data_dir && market_file) fail(ErrorKind::Config, "backtest: give either 'data' or 'market', not both");
  std::optional<Scorer> scorer;
  if (!scores_file) {
    if (!data_dir) fail(ErrorKind::Config, "backtest: scoring with a checkpoint needs 'data'");
    scorer = load_scorer(s, "backtest");
  } else if (s.optional_text("checkpoint")) {
    fail(ErrorKind::Config, "backtest: give either 'scores' or 'checkpoint', not both");
  }
  run.begin();

  std::vector<backtest::MarketDay> market;
  std::map<Date, std::vector<backtest::ScoredStock>> scores;
  std::vector<data::CrossSection> all;
  if (data_dir) {
    all = data::load_csv(*data_dir);
    market = backtest::market_from_cross_sections(all);
  } else {
    market = backtest::load_market_csv(*market_file);
  }
  if (scores_file) {
    for (auto& [date, row] : backtest::load_scores_csv(*scores_file)) {
      if ((!from || !(date < *from)) && (!to || !(*to < date))) scores[date] = std::move(row);
    }
  } else {
    finish_scorer(*scorer, s.resolved().at("normalizer"));
    auto days = data::select_dates(all, from, to);
    scores = as_score_map(score_days(*scorer, days));
  }
  if (scores.empty()) fail(ErrorKind::Data, "backtest: no scored days in the requested range");

  // Execution days: from the first scored date through the day after the last.
  const Date first = scores.begin()->first;
  const Date last = scores.rbegin()->first;
  std::vector<backtest::MarketDay> window;
  for (const auto& day : market) {
    if (day.date < first) continue;
    window.push_back(day);
    if (last < day.date) break;
  }

  const auto ledger = backtest::run_backtest(scores, window, ec);
  if (ledger.equity.empty()) fail(ErrorKind::Data, "backtest: no scored day has a following market day");
  backtest::write_equity_csv(run.path("equity.csv"), ledger);
  run.stamp(run.path("equity.csv"));
  backtest::write_fills_csv(run.path("fills.csv"), ledger);
  run.stamp(run.path("fills.csv"));
  backtest::write_summary_csv(run.path("backtest_summary.csv"), backtest::summarize(ledger, window));
  run.stamp(run.path("backtest_summary.csv"));
  std::ofstream w(run.path("warnings.txt"), std::ios::binary);
  for (const auto& line : ledger.warnings) w << line << "\n";
  if (!w.flush()) fail(ErrorKind::Io, "cannot write " + run.path("warnings.txt").string());
}

// ---------------------------------------------------------------------------
// features

void cmd_features(const RunOptions& options) {
  Run run(options, "features");
  auto& s = run.settings();
  const fs::path data_dir = required_path(s, "data", "features");
  const auto from = date_key(s, "from");
  const auto to = date_key(s, "to");
  run.begin();

  std::vector<features::FactorRow> rows;
  for (const auto& cs : load_range(data_dir, from, to)) {
    auto day = features::compute_factors(cs);
    rows.insert(rows.end(), std::make_move_iterator(day.begin()), std::make_move_iterator(day.end()));
  }
  features::write_factor_csv(run.path("factors.csv"), rows);
  run.stamp(run.path("factors.csv"));
}

}  // namespace dspo::cli
