#pragma once
// Mini-batch training: sub-sampled cross-sections, MonLR (or MSE) loss,
// global-norm clipping, AdamW with a Noam learning-rate schedule, and
// validation RankIC on full cross-sections once per epoch.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dspo/marketdata.hpp"
#include "dspo/model.hpp"

namespace dspo::train {

enum class Objective { MonLR, Mse };
enum class Selection { Best, SecondBest, Last };

std::string objective_name(Objective o);
Objective parse_objective(std::string_view s);
std::string selection_name(Selection s);
Selection parse_selection(std::string_view s);

struct TrainConfig {
  std::size_t k = 1000;
  std::size_t m = 6;
  std::size_t epochs = 80;
  double lr = 1e-5;  // peak learning rate when scale is automatic
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip = 0.5;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 0;  // 0 = 10% of the total steps (at least 1)
  double scale = 0.0;            // <= 0: chosen so the schedule peaks at lr
  Objective objective = Objective::MonLR;
  Selection selection = Selection::Best;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
};

std::size_t steps_per_epoch(std::size_t n_days, std::size_t m);

// scale * model_size^-0.5 * min(step^-0.5, step * warmup^-1.5).
// Throws Error(Config) for step 0 or warmup 0.
double noam_lr(std::size_t step, std::size_t warmup_steps, std::size_t model_size, double scale);
// Scale for which the schedule peaks (at step == warmup) at `peak`.
double noam_scale_for_peak(double peak, std::size_t warmup_steps, std::size_t model_size);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay Adam update. Returns false and leaves params and
// state untouched if any gradient is non-finite.
bool adamw_step(std::vector<Tensor*> params, std::span<const Tensor> grads, AdamState& state, double lr,
                const AdamParams& hp);

// Rescales grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

// Mean daily RankIC of the model's scores on full cross-sections; days with an
// undefined correlation are skipped. nullopt if no day is defined.
std::optional<double> mean_rank_ic(const model::ModelParams& params, std::span<const data::CrossSection> days);

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_rankic;
};

struct TrainResult {
  model::ModelParams selected;
  model::ModelParams final_params;
  std::vector<LogRow> log;
  std::size_t selected_step = 0;
  std::optional<double> selected_val_rankic;
  std::size_t rejected_steps = 0;
};

TrainResult train(const model::ModelParams& init, std::span<const data::CrossSection> train_days,
                  std::span<const data::CrossSection> val_days, const TrainConfig& config);

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> log);

}  // namespace dspo::train
