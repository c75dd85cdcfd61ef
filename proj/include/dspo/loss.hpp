#pragma once
// Pairwise monotonic logistic loss and the MSE regression baseline.
//   l_ij = log(1 + exp(-tanh(f_i - f_j) * tanh(y_i - y_j)))
// averaged over the n(n-1) ordered pairs i != j.

#include <span>
#include <vector>

#include "dspo/tape.hpp"

namespace dspo::loss {

inline constexpr double kLog2 = 0.69314718055994530942;

double pair_term(double score_diff, double return_diff);

// Throws Error(Dimension) if lengths differ or n < 2, Error(Numeric) on
// non-finite input.
double monlr_value(std::span<const double> scores, std::span<const double> returns);
std::vector<double> monlr_gradient(std::span<const double> scores, std::span<const double> returns);
// Differentiable in `scores` (shape {n} or {n, 1}); returns are constants.
Var monlr_loss(Var scores, std::span<const double> returns);

double mse_value(std::span<const double> scores, std::span<const double> returns);
Var baseline_mse(Var scores, std::span<const double> returns);

}  // namespace dspo::loss
