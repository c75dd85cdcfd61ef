#include "dspo/model.hpp"

#include <cmath>
#include <random>

#include "dspo/error.hpp"
#include "dspo/ops.hpp"

namespace dspo::model {

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "model: " + what); };
  if (hf_fields == 0) bad("hf_fields must be >= 1");
  if (lf_fields == 0) bad("lf_fields must be >= 1");
  if (d == 0) bad("d must be >= 1");
  if (conv_layers == 0) bad("conv_layers must be >= 1");
  if (kernel == 0) bad("kernel must be >= 1");
  if (stride == 0) bad("stride must be >= 1");
}

std::size_t ModelConfig::fused_length(std::size_t bars) const {
  std::size_t t = bars;
  for (std::size_t l = 0; l < conv_layers; ++l) t = ad::conv_output_length(t, kernel, stride);
  return t;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"hf_fields", std::to_string(hf_fields)},     {"lf_fields", std::to_string(lf_fields)},
          {"d", std::to_string(d)},                     {"conv_layers", std::to_string(conv_layers)},
          {"kernel", std::to_string(kernel)},           {"stride", std::to_string(stride)},
          {"conv_channels", std::to_string(channels())}, {"mlp_hidden", std::to_string(hidden())},
          {"seed", std::to_string(seed)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* key) -> std::uint64_t {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::Data, std::string("model config is missing '") + key + "'");
    try {
      std::size_t used = 0;
      const auto v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Data, std::string("model config '") + key + "' is not an integer: " + it->second);
    }
  };
  ModelConfig c;
  c.hf_fields = get("hf_fields");
  c.lf_fields = get("lf_fields");
  c.d = get("d");
  c.conv_layers = get("conv_layers");
  c.kernel = get("kernel");
  c.stride = get("stride");
  c.conv_channels = get("conv_channels");
  c.mlp_hidden = get("mlp_hidden");
  c.seed = get("seed");
  c.validate();
  return c;
}

namespace {

struct Spec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;  // 0 marks a bias (zero-initialized)
};

std::vector<Spec> layout(const ModelConfig& c) {
  std::vector<Spec> specs;
  const std::size_t ch = c.channels();
  for (std::size_t l = 0; l < c.conv_layers; ++l) {
    const std::size_t in = l == 0 ? c.hf_fields : ch;
    const std::string p = "conv" + std::to_string(l);
    specs.push_back({p + "_w", {c.kernel, in, ch}, c.kernel * in, c.kernel * ch});
    specs.push_back({p + "_b", {ch}, 0, 0});
  }
  specs.push_back({"hf_proj_w", {ch, c.d}, ch, c.d});
  specs.push_back({"hf_proj_b", {c.d}, 0, 0});
  specs.push_back({"lf_proj_w", {c.lf_fields, c.d}, c.lf_fields, c.d});
  specs.push_back({"lf_proj_b", {c.d}, 0, 0});
  for (const char* n : {"fuse_q", "fuse_k", "fuse_v", "inter_q", "inter_k", "inter_v"}) {
    specs.push_back({n, {c.d, c.d}, c.d, c.d});
  }
  specs.push_back({"mlp_w1", {c.d, c.hidden()}, c.d, c.hidden()});
  specs.push_back({"mlp_b1", {c.hidden()}, 0, 0});
  specs.push_back({"mlp_w2", {c.hidden(), 1}, c.hidden(), 1});
  specs.push_back({"mlp_b2", {1}, 0, 0});
  return specs;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ModelParams p;
  p.config_ = config;
  for (const Spec& s : layout(config)) {
    Tensor t = Tensor::zeros(s.shape);
    if (s.fan_out > 0) {
      const double limit = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& v : t.values()) v = u(rng);
    }
    p.tensors_.push_back({s.name, std::move(t)});
  }
  return p;
}

ModelParams ModelParams::from_tensors(const ModelConfig& config, std::vector<NamedTensor> tensors) {
  config.validate();
  const auto specs = layout(config);
  if (tensors.size() != specs.size()) {
    fail(ErrorKind::Data, "model expects " + std::to_string(specs.size()) + " arrays, got " +
                              std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (tensors[i].name != specs[i].name || tensors[i].value.shape() != specs[i].shape) {
      fail(ErrorKind::Data, "array " + std::to_string(i) + " is " + tensors[i].name + " " +
                                shape_string(tensors[i].value.shape()) + ", expected " + specs[i].name + " " +
                                shape_string(specs[i].shape));
    }
  }
  ModelParams p;
  p.config_ = config;
  p.tensors_ = std::move(tensors);
  return p;
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  fail(ErrorKind::Data, "no parameter named '" + std::string(name) + "'");
}

Tensor& ModelParams::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).at(name));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.value.all_finite()) return false;
  }
  return true;
}

Bound bind(const ModelParams& params, Tape& tape, bool trainable) {
  std::vector<Var> vars;
  for (const auto& t : params.tensors()) vars.push_back(trainable ? tape.variable(t.value) : tape.constant(t.value));
  return bind_vars(params.config(), std::move(vars));
}

Bound bind_vars(const ModelConfig& c, std::vector<Var> vars) {
  const auto specs = layout(c);
  if (vars.size() != specs.size()) {
    fail(ErrorKind::Dimension, "model expects " + std::to_string(specs.size()) + " parameter arrays, got " +
                                   std::to_string(vars.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (vars[i].shape() != specs[i].shape) {
      fail(ErrorKind::Dimension, specs[i].name + " must be " + shape_string(specs[i].shape) + ", got " +
                                     shape_string(vars[i].shape()));
    }
  }
  Bound w;
  w.all = std::move(vars);
  std::size_t i = 0;
  for (std::size_t l = 0; l < c.conv_layers; ++l) {
    w.conv_w.push_back(w.all[i++]);
    w.conv_b.push_back(w.all[i++]);
  }
  for (Var* v : {&w.hf_w, &w.hf_b, &w.lf_w, &w.lf_b, &w.fuse_q, &w.fuse_k, &w.fuse_v, &w.inter_q, &w.inter_k,
                 &w.inter_v, &w.mlp_w1, &w.mlp_b1, &w.mlp_w2, &w.mlp_b2}) {
    *v = w.all[i++];
  }
  w.d = c.d;
  w.stride = c.stride;
  return w;
}

namespace {

// (B, T, in) x (in, out) -> (B, T, out)
Var project3(Var x, Var weight) {
  const Shape s = x.shape();
  Var flat = ad::reshape(x, {s[0] * s[1], s[2]});
  return ad::reshape(ad::matmul(flat, weight), {s[0], s[1], weight.shape()[1]});
}

}  // namespace

Var fuse(const Bound& w, Var hf, Var lf) {
  if (hf.value().rank() != 3 || lf.value().rank() != 2 || hf.shape()[0] != lf.shape()[0]) {
    fail(ErrorKind::Dimension, "fuse: hf " + shape_string(hf.shape()) + " and lf " + shape_string(lf.shape()) +
                                   " must be (B, T, a) and (B, b)");
  }
  const std::size_t batch = hf.shape()[0];
  Var h = hf;
  for (std::size_t l = 0; l < w.conv_w.size(); ++l) {
    h = ad::add_bias(ad::conv1d(h, w.conv_w[l], w.stride), w.conv_b[l]);
    if (l + 1 < w.conv_w.size()) h = ad::relu(h);
  }
  Var e_hf = ad::add_bias(project3(h, w.hf_w), w.hf_b);        // (B, T', D)
  Var e_lf = ad::linear(lf, w.lf_w, w.lf_b);                    // (B, D)
  Var q = ad::reshape(ad::matmul(e_lf, w.fuse_q), {batch, 1, w.d});
  Var k = project3(e_hf, w.fuse_k);
  Var v = project3(e_hf, w.fuse_v);
  Var logits = ad::scale(ad::matmul(q, k, ad::Trans::No, ad::Trans::Yes), 1.0 / std::sqrt(static_cast<double>(w.d)));
  Var o = ad::matmul(ad::softmax_rows(logits), v);             // (B, 1, D)
  return ad::reshape(o, {batch, w.d});
}

Var interstock(const Bound& w, Var o) {
  if (o.value().rank() != 2 || o.shape()[1] != w.d) {
    fail(ErrorKind::Dimension, "interstock: expected (N, " + std::to_string(w.d) + "), got " + shape_string(o.shape()));
  }
  Var q = ad::matmul(o, w.inter_q);
  Var k = ad::matmul(o, w.inter_k);
  Var v = ad::matmul(o, w.inter_v);
  Var logits = ad::scale(ad::matmul(q, k, ad::Trans::No, ad::Trans::Yes), 1.0 / std::sqrt(static_cast<double>(w.d)));
  return ad::matmul(ad::softmax_rows(logits), v);
}

Var score(const Bound& w, Var r) {
  return ad::linear(ad::relu(ad::linear(r, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2);
}

Tensor stack_hf(const data::CrossSection& cs) {
  if (cs.panels.empty()) fail(ErrorKind::Dimension, "stack_hf: empty cross-section");
  const std::size_t t = cs.panels.front().n_bars();
  const std::size_t a = cs.panels.front().n_fields();
  std::vector<double> values;
  values.reserve(cs.panels.size() * t * a);
  for (const auto& p : cs.panels) {
    if (p.n_bars() != t || p.n_fields() != a) {
      fail(ErrorKind::Dimension, "stack_hf: panel " + p.stock_id + " is " + std::to_string(p.n_bars()) + "x" +
                                     std::to_string(p.n_fields()) + ", expected " + std::to_string(t) + "x" +
                                     std::to_string(a));
    }
    const auto hf = p.hf();
    values.insert(values.end(), hf.begin(), hf.end());
  }
  return Tensor({cs.panels.size(), t, a}, std::move(values));
}

Tensor stack_lf(const data::CrossSection& cs) {
  if (cs.panels.empty()) fail(ErrorKind::Dimension, "stack_lf: empty cross-section");
  const std::size_t b = cs.panels.front().lf.size();
  std::vector<double> values;
  for (const auto& p : cs.panels) {
    if (p.lf.size() != b) fail(ErrorKind::Dimension, "stack_lf: panel " + p.stock_id + " lf width differs");
    values.insert(values.end(), p.lf.begin(), p.lf.end());
  }
  return Tensor({cs.panels.size(), b}, std::move(values));
}

Var forward(const Bound& w, Tape& tape, const data::CrossSection& cs) {
  Var o = fuse(w, tape.constant(stack_hf(cs)), tape.constant(stack_lf(cs)));
  return score(w, interstock(w, o));
}

namespace {

Tensor batch_of_one(const Tensor& hf, const Tensor& lf, Tensor& lf_out) {
  if (hf.rank() != 2) fail(ErrorKind::Dimension, "fuse_stock: hf must be (T, a), got " + shape_string(hf.shape()));
  if (lf.rank() != 1) fail(ErrorKind::Dimension, "fuse_stock: lf must be (b), got " + shape_string(lf.shape()));
  lf_out = lf.reshaped({1, lf.size()});
  return hf.reshaped({1, hf.dim(0), hf.dim(1)});
}

}  // namespace

Tensor fuse_stock(const ModelParams& params, const Tensor& hf, const Tensor& lf) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  Tensor lf2;
  const Tensor hf3 = batch_of_one(hf, lf, lf2);
  return fuse(w, tape.constant(hf3), tape.constant(lf2)).value();
}

Tensor fusion_attention(const ModelParams& params, const Tensor& hf, const Tensor& lf) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  Tensor lf2;
  const Tensor hf3 = batch_of_one(hf, lf, lf2);
  fuse(w, tape.constant(hf3), tape.constant(lf2));
  // the softmax node is the only one with that op name
  for (std::size_t id = tape.size(); id-- > 0;) {
    if (tape.op(id) == "softmax_rows") {
      const Tensor& a = tape.value(id);
      return a.reshaped({1, a.size()});
    }
  }
  fail(ErrorKind::Numeric, "fusion_attention: no attention node recorded");
}

Tensor interstock_forward(const ModelParams& params, const Tensor& o) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  return interstock(w, tape.constant(o)).value();
}

Tensor interstock_attention(const ModelParams& params, const Tensor& o) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  interstock(w, tape.constant(o));
  for (std::size_t id = tape.size(); id-- > 0;) {
    if (tape.op(id) == "softmax_rows") return tape.value(id);
  }
  fail(ErrorKind::Numeric, "interstock_attention: no attention node recorded");
}

std::vector<double> score_rows(const ModelParams& params, const Tensor& r) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  const auto v = score(w, tape.constant(r)).value().values();
  return {v.begin(), v.end()};
}

std::vector<double> predict(const ModelParams& params, const data::CrossSection& cs) {
  Tape tape;
  const Bound w = bind(params, tape, false);
  const auto v = forward(w, tape, cs).value().values();
  return {v.begin(), v.end()};
}

}  // namespace dspo::model
