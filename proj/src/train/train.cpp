#include "dspo/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"
#include "dspo/loss.hpp"
#include "dspo/metrics.hpp"
#include "dspo/sampler.hpp"

namespace dspo::train {

std::string objective_name(Objective o) { return o == Objective::MonLR ? "monlr" : "mse"; }

Objective parse_objective(std::string_view s) {
  if (s == "monlr") return Objective::MonLR;
  if (s == "mse") return Objective::Mse;
  fail(ErrorKind::Config, "objective must be monlr or mse, got '" + std::string(s) + "'");
}

std::string selection_name(Selection s) {
  switch (s) {
    case Selection::Best: return "best";
    case Selection::SecondBest: return "second_best";
    case Selection::Last: return "last";
  }
  return "?";
}

Selection parse_selection(std::string_view s) {
  if (s == "best") return Selection::Best;
  if (s == "second_best") return Selection::SecondBest;
  if (s == "last") return Selection::Last;
  fail(ErrorKind::Config, "selection must be best, second_best or last, got '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "train: " + what); };
  if (k < 2) bad("k must be >= 2");
  if (m < 1) bad("m must be >= 1");
  if (epochs < 1) bad("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) bad("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) bad("betas must be in (0, 1)");
  if (!(eps > 0.0)) bad("eps must be positive");
  if (!(clip > 0.0)) bad("clip must be positive");
  if (!(weight_decay >= 0.0)) bad("weight_decay must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"k", std::to_string(k)},
          {"m", std::to_string(m)},
          {"epochs", std::to_string(epochs)},
          {"lr", csv::format_double(lr)},
          {"beta1", csv::format_double(beta1)},
          {"beta2", csv::format_double(beta2)},
          {"eps", csv::format_double(eps)},
          {"clip", csv::format_double(clip)},
          {"weight_decay", csv::format_double(weight_decay)},
          {"warmup_steps", std::to_string(warmup_steps)},
          {"scale", csv::format_double(scale)},
          {"objective", objective_name(objective)},
          {"selection", selection_name(selection)},
          {"seed", std::to_string(seed)}};
}

std::size_t steps_per_epoch(std::size_t n_days, std::size_t m) { return (n_days + m - 1) / m; }

double noam_lr(std::size_t step, std::size_t warmup_steps, std::size_t model_size, double scale) {
  if (step == 0) fail(ErrorKind::Config, "noam_lr: step must be >= 1");
  if (warmup_steps == 0 || model_size == 0) fail(ErrorKind::Config, "noam_lr: warmup and model size must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return scale * std::pow(static_cast<double>(model_size), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

double noam_scale_for_peak(double peak, std::size_t warmup_steps, std::size_t model_size) {
  return peak * std::sqrt(static_cast<double>(model_size) * static_cast<double>(warmup_steps));
}

bool adamw_step(std::vector<Tensor*> params, std::span<const Tensor> grads, AdamState& state, double lr,
                const AdamParams& hp) {
  if (params.size() != grads.size()) fail(ErrorKind::Dimension, "adamw_step: params and grads differ in count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      fail(ErrorKind::Dimension, "adamw_step: parameter " + std::to_string(i) + " is " +
                                     shape_string(params[i]->shape()) + " but its gradient is " +
                                     shape_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) return false;
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape()));
      state.v.push_back(Tensor::zeros(p->shape()));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + hp.eps);
      p[j] -= lr * (update + hp.weight_decay * p[j]);
    }
  }
  return true;
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double x : g.values()) ss += x * x;
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.values()) x *= f;
    }
  }
  return norm;
}

std::optional<double> mean_rank_ic(const model::ModelParams& params, std::span<const data::CrossSection> days) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& cs : days) {
    const auto scores = model::predict(params, cs);
    if (auto ic = metrics::spearman(scores, cs.returns)) {
      total += *ic;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

namespace {

std::uint64_t batch_seed(std::uint64_t seed, std::size_t step) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(step), std::uint64_t{0xba7c4}};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

struct Snapshot {
  double val = 0.0;
  std::size_t step = 0;
  model::ModelParams params;
};

}  // namespace

TrainResult train(const model::ModelParams& init, std::span<const data::CrossSection> train_days,
                  std::span<const data::CrossSection> val_days, const TrainConfig& config) {
  config.validate();
  if (train_days.empty()) fail(ErrorKind::Data, "train: no training days");
  for (const auto& v : val_days) {
    for (const auto& t : train_days) {
      if (v.date == t.date) fail(ErrorKind::Data, "train: validation date " + v.date.to_string() + " is also a training date");
    }
  }
  std::size_t min_n = train_days.front().size();
  for (const auto& cs : train_days) min_n = std::min(min_n, cs.size());
  sampler::SubSampleSpec spec{config.m, config.k, config.seed};
  spec.validate(train_days.size(), min_n);

  const std::size_t per_epoch = steps_per_epoch(train_days.size(), config.m);
  const std::size_t total = per_epoch * config.epochs;
  const std::size_t warmup = config.warmup_steps ? config.warmup_steps : std::max<std::size_t>(1, total / 10);
  const std::size_t model_size = init.config().d;
  const double scale = config.scale > 0.0 ? config.scale : noam_scale_for_peak(config.lr, warmup, model_size);
  const AdamParams hp{config.beta1, config.beta2, config.eps, config.weight_decay};

  model::ModelParams params = init;
  AdamState adam;
  TrainResult result{init, init, {}, 0, std::nullopt, 0};
  std::vector<Snapshot> top;  // best two by validation RankIC, best first

  for (std::size_t step = 1; step <= total; ++step) {
    const std::uint64_t bseed = batch_seed(config.seed, step);
    sampler::Rng rng(bseed);
    const auto batch = sampler::draw_minibatch(train_days, spec, rng);

    std::vector<Tensor> grads;
    for (const auto& t : params.tensors()) grads.push_back(Tensor::zeros(t.value.shape()));
    double loss_sum = 0.0;
    try {
      for (const auto& cs : batch) {
        Tape tape;
        const model::Bound w = model::bind(params, tape);
        Var scores = model::forward(w, tape, cs);
        Var loss = config.objective == Objective::MonLR ? loss::monlr_loss(scores, cs.returns)
                                                        : loss::baseline_mse(scores, cs.returns);
        loss_sum += loss.value()[0];
        tape.backward(loss);
        for (std::size_t i = 0; i < grads.size(); ++i) {
          auto dst = grads[i].values();
          const Tensor g = tape.grad(w.all[i]);
          const auto src = g.values();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
      fail(ErrorKind::Numeric, "train: non-finite value at step " + std::to_string(step) + " (batch seed " +
                                   std::to_string(bseed) + "): " + e.what());
    }
    const double mean_loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(mean_loss)) {
      fail(ErrorKind::Numeric, "train: loss is not finite at step " + std::to_string(step) + " (batch seed " +
                                   std::to_string(bseed) + ")");
    }
    for (auto& g : grads) {
      for (double& x : g.values()) x /= static_cast<double>(batch.size());
    }
    clip_global_norm(grads, config.clip);
    const double lr = noam_lr(step, warmup, model_size, scale);
    std::vector<Tensor*> ptrs;
    for (auto& t : params.tensors()) ptrs.push_back(&t.value);
    if (!adamw_step(ptrs, grads, adam, lr, hp)) ++result.rejected_steps;

    LogRow row{step, lr, mean_loss, std::nullopt};
    if (step % per_epoch == 0 && !val_days.empty()) {
      row.val_rankic = mean_rank_ic(params, val_days);
      if (row.val_rankic) {
        Snapshot snap{*row.val_rankic, step, params};
        auto pos = std::find_if(top.begin(), top.end(), [&](const Snapshot& s) { return snap.val > s.val; });
        top.insert(pos, std::move(snap));
        if (top.size() > 2) top.pop_back();
      }
    }
    result.log.push_back(row);
  }

  result.final_params = params;
  const Snapshot* chosen = nullptr;
  if (config.selection == Selection::Best && !top.empty()) chosen = &top[0];
  if (config.selection == Selection::SecondBest && !top.empty()) chosen = top.size() > 1 ? &top[1] : &top[0];
  if (chosen) {
    result.selected = chosen->params;
    result.selected_step = chosen->step;
    result.selected_val_rankic = chosen->val;
  } else {
    result.selected = params;
    result.selected_step = total;
    result.selected_val_rankic = val_days.empty() ? std::nullopt : mean_rank_ic(params, val_days);
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> log) {
  csv::Writer out(path);
  out.row({"step", "lr", "loss", "val_rankic"});
  for (const auto& r : log) {
    out.row({std::to_string(r.step), csv::format_double(r.lr), csv::format_double(r.loss),
             r.val_rankic ? csv::format_double(*r.val_rankic) : std::string()});
  }
  out.close();
}

}  // namespace dspo::train
