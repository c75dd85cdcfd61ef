#pragma once
// Ranking network:
//   fusion      o_i = softmax(e_lf Wq (e_hf Wk)^T / sqrt(D)) e_hf Wv
//               e_hf = conv stack over the bar window, projected to D
//               e_lf = projection of the daily low-frequency vector
//   inter-stock R   = softmax(O Wq (O Wk)^T / sqrt(D)) O Wv
//   scorer      s_i = w2 . relu(W1 r_i + b1) + b2

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dspo/marketdata.hpp"
#include "dspo/tape.hpp"
#include "dspo/tensor.hpp"

namespace dspo::model {

struct ModelConfig {
  std::size_t hf_fields = 6;     // a
  std::size_t lf_fields = 4;     // b
  std::size_t d = 16;            // shared embedding width
  std::size_t conv_layers = 2;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t conv_channels = 0;  // 0 = d
  std::size_t mlp_hidden = 0;     // 0 = 2d
  std::uint64_t seed = 0;

  std::size_t channels() const { return conv_channels ? conv_channels : d; }
  std::size_t hidden() const { return mlp_hidden ? mlp_hidden : 2 * d; }
  // Throws Error(Config) on zero widths.
  void validate() const;
  // Bars remaining after the conv stack; throws if the window is too short.
  std::size_t fused_length(std::size_t bars) const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Parameter arrays in a fixed order:
//   conv<l>_w (K, C_in, C_out), conv<l>_b (C_out)   for each conv layer
//   hf_proj_w (C, D), hf_proj_b (D), lf_proj_w (b, D), lf_proj_b (D)
//   fuse_q, fuse_k, fuse_v, inter_q, inter_k, inter_v (D, D)
//   mlp_w1 (D, H), mlp_b1 (H), mlp_w2 (H, 1), mlp_b2 (1)
class ModelParams {
 public:
  // Glorot-uniform weights from a generator seeded with config.seed; zero biases.
  static ModelParams init(const ModelConfig& config);
  // Adopts arrays (e.g. from a checkpoint); checks names and shapes.
  static ModelParams from_tensors(const ModelConfig& config, std::vector<NamedTensor> tensors);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  ModelConfig config_;
  std::vector<NamedTensor> tensors_;
};

// Parameters bound to a tape as differentiable variables.
struct Bound {
  std::vector<Var> all;  // same order as ModelParams::tensors()
  std::vector<Var> conv_w, conv_b;
  Var hf_w, hf_b, lf_w, lf_b;
  Var fuse_q, fuse_k, fuse_v;
  Var inter_q, inter_k, inter_v;
  Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::size_t d = 0;
  std::size_t stride = 1;
};

Bound bind(const ModelParams& params, Tape& tape, bool trainable = true);
// Binds caller-made Vars (in ModelParams::tensors() order); checks shapes.
Bound bind_vars(const ModelConfig& config, std::vector<Var> vars);

// Tape-level building blocks. hf: (B, T, a); lf: (B, b); returns (B, D).
Var fuse(const Bound& w, Var hf, Var lf);
// O: (N, D) -> R: (N, D)
Var interstock(const Bound& w, Var o);
// R: (N, D) -> scores (N, 1)
Var score(const Bound& w, Var r);
// Stacks the cross-section's panels and runs the full pipeline: (N, 1).
Var forward(const Bound& w, Tape& tape, const data::CrossSection& cs);

// Stacked model inputs for one cross-section.
Tensor stack_hf(const data::CrossSection& cs);
Tensor stack_lf(const data::CrossSection& cs);

// Value-only evaluation.
Tensor fuse_stock(const ModelParams& params, const Tensor& hf, const Tensor& lf);  // (T, a), (b) -> (1, D)
Tensor fusion_attention(const ModelParams& params, const Tensor& hf, const Tensor& lf);  // (1, T')
Tensor interstock_forward(const ModelParams& params, const Tensor& o);                // (N, D) -> (N, D)
Tensor interstock_attention(const ModelParams& params, const Tensor& o);              // (N, N)
std::vector<double> score_rows(const ModelParams& params, const Tensor& r);           // (N, D) -> N
std::vector<double> predict(const ModelParams& params, const data::CrossSection& cs);

// Checkpoint file:
//   "DSPOCKPT" | u32 version | kv block (model config) | kv block (metadata)
//   | u64 n_arrays | n x (str name, u32 rank, u64 dims[rank], f64 data[])
//   | u64 FNV-1a of every preceding byte
// where str = u64 length + bytes, kv block = u64 count + count x (str, str),
// and all integers and doubles are little-endian. Written to a temporary
// file and renamed into place.
struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& metadata = {});
// Throws Error(Io) on unreadable files, Error(Data) on a bad magic, version,
// layout or checksum.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dspo::model
