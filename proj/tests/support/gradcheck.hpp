#pragma once
// Central finite-difference oracle for tape gradients. Test-only; it only
// evaluates the forward pass, so it stays independent of the backward code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dspo/tape.hpp"

namespace dspo::testing {

using ScalarBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate(const ScalarBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return build(tape, vars).value()[0];
}

inline std::vector<Tensor> tape_gradients(const ScalarBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  Var loss = build(tape, vars);
  return tape.gradients(loss, vars);
}

inline std::vector<Tensor> numeric_gradients(const ScalarBuilder& build, std::vector<Tensor> inputs,
                                             double step) {
  std::vector<Tensor> out;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Tensor g = Tensor::zeros(inputs[which].shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double saved = inputs[which][i];
      inputs[which][i] = saved + step;
      const double up = evaluate(build, inputs);
      inputs[which][i] = saved - step;
      const double down = evaluate(build, inputs);
      inputs[which][i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// max over entries of |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double max_relative_error(const std::vector<Tensor>& analytic, const std::vector<Tensor>& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < analytic[t].size(); ++i) {
      const double a = analytic[t][i];
      const double n = numeric[t][i];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
  }
  return worst;
}

inline double gradcheck(const ScalarBuilder& build, const std::vector<Tensor>& inputs, double step = 1e-6,
                        double floor = 1e-6) {
  return max_relative_error(tape_gradients(build, inputs), numeric_gradients(build, inputs, step), floor);
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace dspo::testing
