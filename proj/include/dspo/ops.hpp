#pragma once
// Differentiable tensor ops recorded on a Tape. Operands must share a tape.
// There is no implicit broadcasting; add_bias is the only broadcast and
// applies a vector along the last axis.

#include <cstddef>

#include "dspo/tape.hpp"

namespace dspo::ad {

enum class Trans { No, Yes };

// Rank-2 x rank-2, or rank-3 x rank-3 with equal leading batch dimension.
// Supported transpose combinations: NN, NT, TN.
Var matmul(Var a, Var b, Trans ta = Trans::No, Trans tb = Trans::No);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// x (..., M) + b (M)
Var add_bias(Var x, Var bias);
// x (N, in) * w (in, out) + b (out)
Var linear(Var x, Var weight, Var bias);

Var relu(Var x);
Var tanh(Var x);
// log(1 + exp(x)) evaluated without overflow.
Var log1p_exp(Var x);
// Softmax over the last axis; every leading index is one row.
Var softmax_rows(Var x);

// Valid-mode 1-D cross-correlation along time.
// x: (T, C_in) or (B, T, C_in); kernel: (K, C_in, C_out).
// Output: (T', C_out) or (B, T', C_out) with T' = (T - K) / stride + 1.
Var conv1d(Var x, Var kernel, std::size_t stride);

Var sum(Var x);
Var mean(Var x);

// Value-only helpers used outside the tape.
double log1p_exp(double x);
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

}  // namespace dspo::ad
