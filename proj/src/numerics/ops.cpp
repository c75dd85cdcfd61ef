#include "dspo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dspo/error.hpp"
#include "dspo/simd/kernels.hpp"

namespace dspo::ad {
namespace {

struct MatDims {
  std::size_t batch = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

MatDims mat_dims(const Shape& s) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  fail(ErrorKind::Dimension, "matmul operand must be rank 2 or 3, got " + shape_string(s));
}

Tape& common_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) fail(ErrorKind::Dimension, "operands live on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                   " vs " + shape_string(b.shape()));
  }
}

// Elementwise op whose derivative is expressed through (input, output).
template <typename F, typename D>
Var unary(const char* name, Var x, F f, D derivative) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape(), std::vector<double>(xv.size()));
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.tape().record(name, std::move(out), {x},
                         [xid, derivative](Tape& t, std::size_t self, const Tensor& g) {
                           if (!t.requires_grad(xid)) return;
                           const Tensor& in = t.value(xid);
                           const Tensor& y = t.value(self);
                           Tensor& gx = t.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * derivative(in[i], y[i]);
                           }
                         });
}

// C (m x n) += op(A) * op(B) for one batch slice.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  const auto& kt = simd::kernels();
  if (ta == Trans::No && tb == Trans::No) {
    kt.gemm_nn(m, n, k, a, k, b, n, c, n);
  } else if (ta == Trans::No) {
    kt.gemm_nt(m, n, k, a, k, b, k, c, n);
  } else {
    kt.gemm_tn(m, n, k, a, m, b, n, c, n);
  }
}

}  // namespace

double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0) fail(ErrorKind::Dimension, "conv1d stride must be positive");
  if (kernel > length) {
    fail(ErrorKind::Dimension, "conv1d kernel length " + std::to_string(kernel) +
                                   " exceeds input length " + std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

Var matmul(Var a, Var b, Trans ta, Trans tb) {
  Tape& tape = common_tape(a, b);
  if (ta == Trans::Yes && tb == Trans::Yes) {
    fail(ErrorKind::Dimension, "matmul: transposing both operands is not supported");
  }
  const MatDims da = mat_dims(a.shape());
  const MatDims db = mat_dims(b.shape());
  const bool ok_rank = a.value().rank() == b.value().rank();
  const std::size_t m = ta == Trans::No ? da.rows : da.cols;
  const std::size_t k = ta == Trans::No ? da.cols : da.rows;
  const std::size_t kb = tb == Trans::No ? db.rows : db.cols;
  const std::size_t n = tb == Trans::No ? db.cols : db.rows;
  if (!ok_rank || da.batch != db.batch || k != kb) {
    fail(ErrorKind::Dimension, "matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                                   shape_string(b.shape()));
  }
  const std::size_t batch = da.batch;
  Shape out_shape = a.value().rank() == 3 ? Shape{batch, m, n} : Shape{m, n};
  Tensor out = Tensor::zeros(out_shape);
  const double* ap = a.value().data();
  const double* bp = b.value().data();
  for (std::size_t s = 0; s < batch; ++s) {
    gemm(ta, tb, m, n, k, ap + s * m * k, bp + s * k * n, out.data() + s * m * n);
  }
  const std::size_t aid = a.id();
  const std::size_t bid = b.id();
  return tape.record("matmul", std::move(out), {a, b},
                     [aid, bid, ta, tb, batch, m, n, k](Tape& t, std::size_t, const Tensor& g) {
    const auto& kt = simd::kernels();
    const double* av = t.value(aid).data();
    const double* bv = t.value(bid).data();
    const bool need_a = t.requires_grad(aid);
    const bool need_b = t.requires_grad(bid);
    double* ga = need_a ? t.grad_buffer(aid).data() : nullptr;
    double* gb = need_b ? t.grad_buffer(bid).data() : nullptr;
    for (std::size_t s = 0; s < batch; ++s) {
      const double* gs = g.data() + s * m * n;
      const double* as = av + s * m * k;
      const double* bs = bv + s * k * n;
      if (ta == Trans::No && tb == Trans::No) {
        // A: m x k, B: k x n
        if (need_a) kt.gemm_nt(m, k, n, gs, n, bs, n, ga + s * m * k, k);
        if (need_b) kt.gemm_tn(k, n, m, as, k, gs, n, gb + s * k * n, n);
      } else if (ta == Trans::No) {
        // A: m x k, B: n x k
        if (need_a) kt.gemm_nn(m, k, n, gs, n, bs, k, ga + s * m * k, k);
        if (need_b) kt.gemm_tn(n, k, m, gs, n, as, k, gb + s * k * n, k);
      } else {
        // A: k x m, B: k x n
        if (need_a) kt.gemm_nt(k, m, n, bs, n, gs, n, ga + s * m * k, m);
        if (need_b) kt.gemm_nn(k, n, m, as, m, gs, n, gb + s * k * n, n);
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  simd::axpy(1.0, b.value().data(), out.data(), out.size());
  const std::size_t aid = a.id();
  const std::size_t bid = b.id();
  return tape.record("add", std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t, const Tensor& g) {
    for (std::size_t id : {aid, bid}) {
      if (t.requires_grad(id)) simd::axpy(1.0, g.data(), t.grad_buffer(id).data(), g.size());
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  simd::axpy(-1.0, b.value().data(), out.data(), out.size());
  const std::size_t aid = a.id();
  const std::size_t bid = b.id();
  return tape.record("sub", std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(aid)) simd::axpy(1.0, g.data(), t.grad_buffer(aid).data(), g.size());
    if (t.requires_grad(bid)) simd::axpy(-1.0, g.data(), t.grad_buffer(bid).data(), g.size());
  });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_same_shape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape(), std::vector<double>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t aid = a.id();
  const std::size_t bid = b.id();
  return tape.record("mul", std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t, const Tensor& g) {
    const Tensor& x = t.value(aid);
    const Tensor& y = t.value(bid);
    if (t.requires_grad(aid)) {
      Tensor& gx = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gy = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t aid = a.id();
  return a.tape().record("scale", std::move(out), {a}, [aid, factor](Tape& t, std::size_t, const Tensor& g) {
    simd::axpy(factor, g.data(), t.grad_buffer(aid).data(), g.size());
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) fail(ErrorKind::Dimension, "transpose needs rank 2, got " + shape_string(av.shape()));
  const std::size_t r = av.dim(0);
  const std::size_t c = av.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  const std::size_t aid = a.id();
  return a.tape().record("transpose", std::move(out), {a}, [aid, r, c](Tape& t, std::size_t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(aid);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t aid = a.id();
  return a.tape().record("reshape", std::move(out), {a}, [aid](Tape& t, std::size_t, const Tensor& g) {
    simd::axpy(1.0, g.data(), t.grad_buffer(aid).data(), g.size());
  });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = common_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t width = bv.size();
  if (xv.rank() < 1 || xv.shape().back() != width) {
    fail(ErrorKind::Dimension, "add_bias: bias " + shape_string(bv.shape()) +
                                   " does not match last axis of " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t rows = xv.size() / width;
  for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, bv.data(), out.data() + r * width, width);
  const std::size_t xid = x.id();
  const std::size_t bid = bias.id();
  return tape.record("add_bias", std::move(out), {x, bias},
                     [xid, bid, rows, width](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(xid)) simd::axpy(1.0, g.data(), t.grad_buffer(xid).data(), g.size());
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, g.data() + r * width, gb.data(), width);
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var log1p_exp(Var x) {
  return unary("log1p_exp", x, [](double v) { return log1p_exp(v); },
               [](double in, double) {
                 // logistic sigmoid, split to avoid exp overflow
                 if (in >= 0.0) return 1.0 / (1.0 + std::exp(-in));
                 const double e = std::exp(in);
                 return e / (1.0 + e);
               });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) {
    fail(ErrorKind::Dimension, "softmax_rows needs rank >= 2, got " + shape_string(xv.shape()));
  }
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.size() / width;
  Tensor out(xv.shape(), std::vector<double>(xv.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double* o = out.data() + r * width;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= total;
  }
  const std::size_t xid = x.id();
  return x.tape().record("softmax_rows", std::move(out), {x},
                         [xid, rows, width](Tape& t, std::size_t self, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * width;
      const double* gr = g.data() + r * width;
      const double inner = simd::dot(yr, gr, width);
      double* out_r = gx.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) out_r[j] += yr[j] * (gr[j] - inner);
    }
  });
}

Var conv1d(Var x, Var kernel, std::size_t stride) {
  Tape& tape = common_tape(x, kernel);
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (xv.rank() != 2 && xv.rank() != 3) {
    fail(ErrorKind::Dimension, "conv1d input must be (T, C) or (B, T, C), got " + shape_string(xv.shape()));
  }
  const std::size_t batch = xv.rank() == 3 ? xv.dim(0) : 1;
  const std::size_t length = xv.dim(xv.rank() - 2);
  const std::size_t c_in = xv.dim(xv.rank() - 1);
  if (kv.rank() != 3 || kv.dim(1) != c_in) {
    fail(ErrorKind::Dimension, "conv1d kernel " + shape_string(kv.shape()) +
                                   " incompatible with input " + shape_string(xv.shape()));
  }
  const std::size_t width = kv.dim(0);
  const std::size_t c_out = kv.dim(2);
  const std::size_t out_len = conv_output_length(length, width, stride);
  const std::size_t patch = width * c_in;
  Shape out_shape = xv.rank() == 3 ? Shape{batch, out_len, c_out} : Shape{out_len, c_out};
  Tensor out = Tensor::zeros(out_shape);
  // Each output step reads a contiguous (K * C_in) window of the input, so the
  // input itself serves as the im2col matrix with row stride = stride * C_in.
  const auto& kt = simd::kernels();
  for (std::size_t b = 0; b < batch; ++b) {
    kt.gemm_nn(out_len, c_out, patch, xv.data() + b * length * c_in, stride * c_in, kv.data(), c_out,
               out.data() + b * out_len * c_out, c_out);
  }
  const std::size_t xid = x.id();
  const std::size_t kid = kernel.id();
  return tape.record("conv1d", std::move(out), {x, kernel},
                     [=](Tape& t, std::size_t, const Tensor& g) {
    const auto& k = simd::kernels();
    const double* in = t.value(xid).data();
    const double* w = t.value(kid).data();
    if (t.requires_grad(kid)) {
      double* gw = t.grad_buffer(kid).data();
      for (std::size_t b = 0; b < batch; ++b) {
        k.gemm_tn(patch, c_out, out_len, in + b * length * c_in, stride * c_in,
                  g.data() + b * out_len * c_out, c_out, gw, c_out);
      }
    }
    if (t.requires_grad(xid)) {
      // Windows overlap when stride < K, so contributions accumulate.
      double* gx = t.grad_buffer(xid).data();
      for (std::size_t b = 0; b < batch; ++b) {
        k.gemm_nt(out_len, patch, c_out, g.data() + b * out_len * c_out, c_out, w, c_out,
                  gx + b * length * c_in, stride * c_in);
      }
    }
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::scalar(simd::sum(xv.data(), xv.size()));
  const std::size_t xid = x.id();
  return x.tape().record("sum", std::move(out), {x}, [xid](Tape& t, std::size_t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (double& v : gx.values()) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace dspo::ad
