#include "dspo/loss.hpp"

#include <cmath>

#include "dspo/error.hpp"
#include "dspo/ops.hpp"

namespace dspo::loss {
namespace {

void check_inputs(const char* who, std::span<const double> scores, std::span<const double> returns) {
  if (scores.size() != returns.size()) {
    fail(ErrorKind::Dimension, std::string(who) + ": " + std::to_string(scores.size()) + " scores vs " +
                                   std::to_string(returns.size()) + " returns");
  }
  if (scores.size() < 2) fail(ErrorKind::Dimension, std::string(who) + ": needs at least 2 items");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]) || !std::isfinite(returns[i])) {
      fail(ErrorKind::Numeric, std::string(who) + ": non-finite input at index " + std::to_string(i));
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::span<const double> flat_scores(const Var& scores) {
  const auto& s = scores.shape();
  if (!(s.size() == 1 || (s.size() == 2 && s[1] == 1))) {
    fail(ErrorKind::Dimension, "loss: scores must be {n} or {n, 1}, got " + shape_string(s));
  }
  return scores.value().values();
}

}  // namespace

double pair_term(double score_diff, double return_diff) {
  return ad::log1p_exp(-std::tanh(score_diff) * std::tanh(return_diff));
}

// l_ij = l_ji, so each unordered pair is evaluated once and counted twice.
double monlr_value(std::span<const double> scores, std::span<const double> returns) {
  check_inputs("monlr_loss", scores, returns);
  const std::size_t n = scores.size();
  // Accumulating offsets from log 2 keeps tied-return pairs exactly neutral.
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += pair_term(scores[i] - scores[j], returns[i] - returns[j]) - kLog2;
  }
  return kLog2 + 2.0 * total / static_cast<double>(n * (n - 1));
}

std::vector<double> monlr_gradient(std::span<const double> scores, std::span<const double> returns) {
  check_inputs("monlr_gradient", scores, returns);
  const std::size_t n = scores.size();
  std::vector<double> grad(n, 0.0);
  const double w = 2.0 / static_cast<double>(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = std::tanh(scores[i] - scores[j]);
      const double b = std::tanh(returns[i] - returns[j]);
      if (b == 0.0) continue;
      // d/d(f_i - f_j) of log1p(exp(-a b)) = -b sigmoid(-a b) (1 - a^2)
      const double g = -w * b * sigmoid(-a * b) * (1.0 - a * a);
      grad[i] += g;
      grad[j] -= g;
    }
  }
  return grad;
}

Var monlr_loss(Var scores, std::span<const double> returns) {
  const auto f = flat_scores(scores);
  const double value = monlr_value(f, returns);
  std::vector<double> y(returns.begin(), returns.end());
  std::vector<double> f_copy(f.begin(), f.end());
  return scores.tape().record("monlr_loss", Tensor::scalar(value), {scores},
                              [in = scores.id(), f_copy = std::move(f_copy), y = std::move(y)](
                                  Tape& tape, std::size_t, const Tensor& g) {
                                const auto grad = monlr_gradient(f_copy, y);
                                auto buf = tape.grad_buffer(in).values();
                                for (std::size_t i = 0; i < grad.size(); ++i) buf[i] += g[0] * grad[i];
                              });
}

double mse_value(std::span<const double> scores, std::span<const double> returns) {
  if (scores.size() != returns.size() || scores.empty()) {
    fail(ErrorKind::Dimension, "mse: " + std::to_string(scores.size()) + " scores vs " +
                                   std::to_string(returns.size()) + " returns");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += (scores[i] - returns[i]) * (scores[i] - returns[i]);
  return total / static_cast<double>(scores.size());
}

Var baseline_mse(Var scores, std::span<const double> returns) {
  const auto f = flat_scores(scores);
  const double value = mse_value(f, returns);
  std::vector<double> diff(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) diff[i] = f[i] - returns[i];
  return scores.tape().record("mse", Tensor::scalar(value), {scores},
                              [in = scores.id(), diff = std::move(diff)](Tape& tape, std::size_t, const Tensor& g) {
                                auto buf = tape.grad_buffer(in).values();
                                const double w = 2.0 * g[0] / static_cast<double>(diff.size());
                                for (std::size_t i = 0; i < diff.size(); ++i) buf[i] += w * diff[i];
                              });
}

}  // namespace dspo::loss
