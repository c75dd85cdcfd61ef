#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"

namespace dspo::data {

void GeneratorConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "generator: " + what); };
  if (n_stocks < 2) bad("n_stocks must be >= 2");
  if (n_days < 1) bad("n_days must be >= 1");
  if (window_days < 1) bad("window_days must be >= 1");
  if (n_latent < 1) bad("n_latent must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) bad("noise must be finite and >= 0");
  if (!(return_scale > 0.0) || return_scale > 0.2) bad("return_scale must be in (0, 0.2]");
  if (!(lf_noise >= 0.0)) bad("lf_noise must be >= 0");
  if (!(market_vol >= 0.0)) bad("market_vol must be >= 0");
  if (noise_dof != 0.0 && !(noise_dof > 2.0)) bad("noise_dof must be 0 (Gaussian) or > 2");
  if (!(volume_loading >= 0.0) || !(volume_noise >= 0.0) || !(volatility_loading >= 0.0)) {
    bad("loadings and volume_noise must be >= 0");
  }
  if (halted_stocks + 2 > n_stocks) bad("at least two stocks must trade");
  if (start.weekday() >= 5) bad("start date must be a weekday");
  (void)bars_per_day(bar_minutes);
}

namespace {

constexpr double kMaxShock = 20.0;

struct StockPath {
  std::shared_ptr<BarSeries> series;
  std::vector<double> latent_scores;           // per labelled date
  std::vector<double> returns;                 // per labelled date
  std::vector<std::vector<double>> lf;         // per labelled date
};

// Unit-variance idiosyncratic shock: Gaussian, or Student-t when noise_dof > 2.
double shock(const GeneratorConfig& cfg, std::mt19937_64& rng) {
  if (cfg.noise_dof <= 0.0) return std::normal_distribution<double>()(rng);
  const double t = std::student_t_distribution<double>(cfg.noise_dof)(rng);
  return std::clamp(t * std::sqrt((cfg.noise_dof - 2.0) / cfg.noise_dof), -kMaxShock, kMaxShock);
}

StockPath simulate_stock(const GeneratorConfig& cfg, std::size_t stock, bool halted, std::uint64_t seed,
                         const std::vector<Date>& calendar, const std::vector<double>& market) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(stock), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  const std::size_t n_bars = bars_per_day(cfg.bar_minutes);
  const std::size_t n_cal = calendar.size();
  const std::size_t k = cfg.n_latent;
  const std::size_t w = cfg.window_days;

  const double base_price = std::exp(std::log(50.0) + 0.5 * normal(rng));
  const double base_volume = std::exp(std::log(2e4) + 0.7 * normal(rng));
  const double base_sigma = cfg.return_scale / std::sqrt(static_cast<double>(n_bars + 1));

  std::vector<double> z(n_cal * k);
  for (double& v : z) v = normal(rng);
  // Latents are abnormal-activity shocks: centred per stock over the calendar.
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t tau = 0; tau < n_cal; ++tau) mean += z[tau * k + j];
    mean /= static_cast<double>(n_cal);
    for (std::size_t tau = 0; tau < n_cal; ++tau) z[tau * k + j] -= mean;
  }

  // Labels: latent score = standardized window mean of the latent factors.
  const double score_scale = std::sqrt(static_cast<double>(k) / static_cast<double>(w));
  StockPath out;
  out.latent_scores.resize(cfg.n_days);
  out.returns.resize(cfg.n_days);
  out.lf.resize(cfg.n_days);
  for (std::size_t d = 0; d < cfg.n_days; ++d) {
    const std::size_t day = d + w - 1;
    std::vector<double> window_mean(k, 0.0);
    for (std::size_t tau = day + 1 - w; tau <= day; ++tau) {
      for (std::size_t j = 0; j < k; ++j) window_mean[j] += z[tau * k + j] / static_cast<double>(w);
    }
    double raw = 0.0;
    for (double m : window_mean) raw += m;
    out.latent_scores[d] = raw / score_scale;
    const double noise_draw = shock(cfg, rng);
    out.returns[d] = halted ? 0.0 : cfg.return_scale * (out.latent_scores[d] + cfg.noise * noise_draw + market[d]);
    auto& lf = out.lf[d];
    lf.resize(cfg.n_lf_fields);
    for (std::size_t f = 0; f < cfg.n_lf_fields; ++f) {
      const double signal = f < k ? window_mean[f] * std::sqrt(static_cast<double>(w)) : 0.0;
      lf[f] = signal + cfg.lf_noise * normal(rng) + (f < k ? 0.0 : normal(rng));
    }
  }

  // Log increments: per calendar day, n_bars intraday moves then the overnight gap.
  const std::size_t step = n_bars + 1;
  std::vector<double> sigma(n_cal);
  std::vector<double> inc(n_cal * step);
  for (std::size_t tau = 0; tau < n_cal; ++tau) {
    sigma[tau] = base_sigma * std::exp(cfg.volatility_loading * (k > 1 ? z[tau * k + 1] : 0.0));
    for (std::size_t s = 0; s < step; ++s) inc[tau * step + s] = halted ? 0.0 : sigma[tau] * normal(rng);
  }
  if (!halted) {
    for (std::size_t d = 0; d < cfg.n_days; ++d) {
      const std::size_t day = d + w - 1;
      const std::size_t begin = cfg.horizon == ReturnHorizon::NextOpenToFollowingOpen ? (day + 1) * step
                                                                                      : day * step + n_bars;
      const double target = std::log1p(out.returns[d]);
      double total = 0.0;
      for (std::size_t s = 0; s < step; ++s) total += inc[begin + s];
      const double shift = (target - total) / static_cast<double>(step);
      for (std::size_t s = 0; s < step; ++s) inc[begin + s] += shift;
    }
  }

  auto series = std::make_shared<BarSeries>();
  series->n_fields = 6;
  series->timestamps.reserve(n_cal * n_bars);
  series->values.reserve(n_cal * n_bars * 6);
  double log_price = std::log(base_price);
  for (std::size_t tau = 0; tau < n_cal; ++tau) {
    const double day_volume = halted ? 0.0 : base_volume * std::max(0.05, 1.0 + cfg.volume_loading * z[tau * k]);
    const std::int64_t day_start = calendar[tau].serial() * 1440 + static_cast<std::int64_t>(kSessionOpenMinute);
    for (std::size_t b = 0; b < n_bars; ++b) {
      const double open = std::exp(log_price);
      log_price += inc[tau * step + b];
      const double close = std::exp(log_price);
      const double wick = halted ? 0.0 : 0.5 * sigma[tau];
      const double high = std::max(open, close) * std::exp(wick * std::abs(normal(rng)));
      const double low = std::min(open, close) * std::exp(-wick * std::abs(normal(rng)));
      const double vwap = 0.25 * (open + high + low + close);
      const double pos = n_bars > 1 ? 2.0 * static_cast<double>(b) / static_cast<double>(n_bars - 1) - 1.0 : 0.0;
      const double volume = halted ? 0.0 : day_volume * (1.0 + 0.5 * pos * pos) * std::exp(cfg.volume_noise * normal(rng));
      series->timestamps.push_back(day_start + static_cast<std::int64_t>(b * cfg.bar_minutes));
      for (double v : {open, high, low, close, volume, vwap}) series->values.push_back(v);
    }
    log_price += inc[tau * step + n_bars];
  }
  out.series = std::move(series);
  return out;
}

}  // namespace

SyntheticMarket generate_synthetic_market(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n_bars = bars_per_day(config.bar_minutes);
  // window history + labelled dates + the two opens each label spans
  const std::size_t n_cal = config.window_days + config.n_days + 1;
  std::vector<Date> calendar{config.start};
  while (calendar.size() < n_cal) calendar.push_back(calendar.back().next_weekday());

  // Common daily move shared by every stock; it shifts but never reorders returns.
  std::vector<double> market_moves(config.n_days, 0.0);
  std::seed_seq market_seq{seed, std::uint64_t{0x3a4e7}};
  std::mt19937_64 market_rng(market_seq);
  std::normal_distribution<double> normal;
  for (double& x : market_moves) x = config.market_vol * normal(market_rng);

  std::vector<StockPath> paths;
  paths.reserve(config.n_stocks);
  for (std::size_t i = 0; i < config.n_stocks; ++i) {
    const bool halted = i >= config.n_stocks - config.halted_stocks;
    paths.push_back(simulate_stock(config, i, halted, seed, calendar, market_moves));
  }

  std::vector<std::string> ids(config.n_stocks);
  for (std::size_t i = 0; i < config.n_stocks; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%04zu", i);
    ids[i] = buf;
  }
  std::vector<std::string> lf_fields;
  for (std::size_t f = 0; f < config.n_lf_fields; ++f) lf_fields.push_back("fund" + std::to_string(f + 1));

  SyntheticMarket market;
  market.days.reserve(config.n_days);
  for (std::size_t d = 0; d < config.n_days; ++d) {
    const std::size_t day = d + config.window_days - 1;
    CrossSection cs;
    cs.date = calendar[day];
    cs.hf_fields = default_hf_fields();
    cs.lf_fields = lf_fields;
    std::vector<double> latent;
    for (std::size_t i = 0; i < config.n_stocks; ++i) {
      MultiFreqPanel p{ids[i], cs.date, paths[i].series, d * n_bars, config.window_days * n_bars, paths[i].lf[d]};
      cs.panels.push_back(std::move(p));
      cs.returns.push_back(paths[i].returns[d]);
      latent.push_back(paths[i].latent_scores[d]);
    }
    market.days.push_back(std::move(cs));
    market.latent_scores.push_back(std::move(latent));
  }
  return market;
}

}  // namespace dspo::data
