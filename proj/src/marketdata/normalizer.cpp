#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"

namespace dspo::data {
namespace {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  double sample_std() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

struct StockAccumulator {
  std::vector<Welford> fields;
  std::int64_t last_timestamp = std::numeric_limits<std::int64_t>::min();
};

}  // namespace

NormalizationState fit_normalizer(std::span<const CrossSection> train) {
  if (train.empty()) fail(ErrorKind::Data, "fit_normalizer: empty training set");
  std::vector<const CrossSection*> ordered;
  for (const auto& cs : train) ordered.push_back(&cs);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->date < b->date; });

  const auto& hf_fields = ordered.front()->hf_fields;
  const auto& lf_fields = ordered.front()->lf_fields;
  const std::size_t a = hf_fields.size();
  const std::size_t b = lf_fields.size();

  std::map<std::string, StockAccumulator> stocks;
  std::vector<Welford> pooled(a);
  std::vector<double> lf_min(b, std::numeric_limits<double>::infinity());
  std::vector<double> lf_max(b, -std::numeric_limits<double>::infinity());

  for (const CrossSection* cs : ordered) {
    if (cs->hf_fields != hf_fields || cs->lf_fields != lf_fields) {
      fail(ErrorKind::Data, "fit_normalizer: field layout changes at " + cs->date.to_string());
    }
    for (const auto& panel : cs->panels) {
      auto& acc = stocks[panel.stock_id];
      if (acc.fields.empty()) acc.fields.resize(a);
      const auto ts = panel.timestamps();
      // Consecutive windows overlap; each distinct bar counts once.
      for (std::size_t t = 0; t < panel.n_bars(); ++t) {
        if (ts[t] <= acc.last_timestamp) continue;
        acc.last_timestamp = ts[t];
        for (std::size_t f = 0; f < a; ++f) {
          const double x = panel.hf_at(t, f);
          acc.fields[f].add(x);
          pooled[f].add(x);
        }
      }
      for (std::size_t f = 0; f < b; ++f) {
        lf_min[f] = std::min(lf_min[f], panel.lf[f]);
        lf_max[f] = std::max(lf_max[f], panel.lf[f]);
      }
    }
  }

  NormalizationState state;
  state.fitted_from = ordered.front()->date;
  state.fitted_to = ordered.back()->date;

  std::vector<std::size_t> kept_hf;
  for (std::size_t f = 0; f < a; ++f) {
    const bool varies = std::any_of(stocks.begin(), stocks.end(),
                                    [f](const auto& kv) { return kv.second.fields[f].sample_std() > 0.0; });
    if (varies) {
      kept_hf.push_back(f);
      state.hf_fields.push_back(hf_fields[f]);
    } else {
      state.dropped_hf.push_back(hf_fields[f]);
      state.warnings.push_back("hf field '" + hf_fields[f] + "' is constant over the training window; dropped");
    }
  }
  std::size_t flat_series = 0;
  for (const auto& [id, acc] : stocks) {
    auto& stats = state.hf_stats[id];
    for (std::size_t f : kept_hf) {
      const double sd = acc.fields[f].sample_std();
      if (sd > 0.0) {
        stats.push_back({acc.fields[f].mean, sd});
      } else {
        // flat for this stock only: centre it, leave the scale alone
        stats.push_back({acc.fields[f].mean, 1.0});
        ++flat_series;
      }
    }
  }
  if (flat_series) {
    state.warnings.push_back(std::to_string(flat_series) +
                             " per-stock hf series were constant in training; centred with unit scale");
  }
  for (std::size_t f : kept_hf) {
    const double sd = pooled[f].sample_std();
    state.hf_pooled.push_back({pooled[f].mean, sd > 0.0 ? sd : 1.0});
  }
  for (std::size_t f = 0; f < b; ++f) {
    if (lf_max[f] > lf_min[f]) {
      state.lf_fields.push_back(lf_fields[f]);
      state.lf_min.push_back(lf_min[f]);
      state.lf_max.push_back(lf_max[f]);
    } else {
      state.dropped_lf.push_back(lf_fields[f]);
      state.warnings.push_back("lf field '" + lf_fields[f] + "' is constant over the training window; dropped");
    }
  }
  return state;
}

namespace {

std::vector<std::size_t> resolve_columns(const std::vector<std::string>& present,
                                         const std::vector<std::string>& retained,
                                         const std::vector<std::string>& dropped, const char* kind,
                                         const Date& date) {
  for (const auto& name : present) {
    if (std::find(retained.begin(), retained.end(), name) == retained.end() &&
        std::find(dropped.begin(), dropped.end(), name) == dropped.end()) {
      fail(ErrorKind::Data, std::string("apply_normalizer: unknown ") + kind + " field '" + name + "' on " +
                                date.to_string());
    }
  }
  std::vector<std::size_t> cols;
  for (const auto& name : retained) {
    auto it = std::find(present.begin(), present.end(), name);
    if (it == present.end()) {
      fail(ErrorKind::Data, std::string("apply_normalizer: missing ") + kind + " field '" + name + "' on " +
                                date.to_string());
    }
    cols.push_back(static_cast<std::size_t>(it - present.begin()));
  }
  return cols;
}

using SeriesCache = std::unordered_map<const BarSeries*, std::shared_ptr<const BarSeries>>;

CrossSection apply_one(const NormalizationState& state, const CrossSection& cs, SeriesCache& cache) {
  const auto hf_cols = resolve_columns(cs.hf_fields, state.hf_fields, state.dropped_hf, "hf", cs.date);
  const auto lf_cols = resolve_columns(cs.lf_fields, state.lf_fields, state.dropped_lf, "lf", cs.date);
  CrossSection out;
  out.date = cs.date;
  out.hf_fields = state.hf_fields;
  out.lf_fields = state.lf_fields;
  out.returns = cs.returns;
  out.panels.reserve(cs.panels.size());
  const std::size_t width = hf_cols.size();
  for (const auto& panel : cs.panels) {
    auto stats_it = state.hf_stats.find(panel.stock_id);
    const auto& stats = stats_it != state.hf_stats.end() ? stats_it->second : state.hf_pooled;
    auto& normalized = cache[panel.series.get()];
    if (!normalized) {
      // Standardize the whole shared series once; every window reuses it.
      const BarSeries& src = *panel.series;
      auto dst = std::make_shared<BarSeries>();
      dst->timestamps = src.timestamps;
      dst->n_fields = width;
      dst->values.resize(src.size() * width);
      for (std::size_t t = 0; t < src.size(); ++t) {
        for (std::size_t k = 0; k < width; ++k) {
          const double x = src.values[t * src.n_fields + hf_cols[k]];
          dst->values[t * width + k] = (x - stats[k].mean) / stats[k].std;
        }
      }
      normalized = std::move(dst);
    }
    MultiFreqPanel p{panel.stock_id, panel.as_of, normalized, panel.first, panel.length, {}};
    p.lf.reserve(lf_cols.size());
    for (std::size_t k = 0; k < lf_cols.size(); ++k) {
      const double scaled = (panel.lf[lf_cols[k]] - state.lf_min[k]) / (state.lf_max[k] - state.lf_min[k]);
      p.lf.push_back(std::clamp(scaled, 0.0, 1.0));
    }
    out.panels.push_back(std::move(p));
  }
  return out;
}

}  // namespace

CrossSection apply_normalizer(const NormalizationState& state, const CrossSection& cs) {
  SeriesCache cache;
  return apply_one(state, cs, cache);
}

std::vector<CrossSection> apply_normalizer(const NormalizationState& state, std::span<const CrossSection> days) {
  SeriesCache cache;
  std::vector<CrossSection> out;
  out.reserve(days.size());
  for (const auto& cs : days) out.push_back(apply_one(state, cs, cache));
  return out;
}

}  // namespace dspo::data
