#include "marketgraph/ops.hpp"

#include <cmath>
#include <string>

#include "marketgraph/errors.hpp"

namespace marketgraph {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  if (&t != &b.tape()) throw TapeError("operands recorded on different tapes");
  return t;
}

void accumulate(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// Broadcast pattern of a binary elementwise op.
enum class Bcast { kSame, kLeftScalar, kRightScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (a.size() == 1) return Bcast::kLeftScalar;
  if (b.size() == 1) return Bcast::kRightScalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, Bcast kind, F f) {
  const Shape& shape = kind == Bcast::kLeftScalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kind == Bcast::kLeftScalar ? a[0] : a[i];
    const double y = kind == Bcast::kRightScalar ? b[0] : b[i];
    out[i] = f(x, y);
  }
  return Tensor::unchecked(shape, std::move(out));
}

// Adds `g * coef(i)` into the grad of an operand, summing when it was broadcast.
template <typename Coef>
void scatter_grad(Tape& t, std::size_t id, const Tensor& gout, bool broadcast, Coef coef) {
  if (!t.requires_grad(id)) return;
  Tensor& g = t.grad_buffer(id);
  if (broadcast) {
    double s = 0.0;
    for (std::size_t i = 0; i < gout.size(); ++i) s += gout[i] * coef(i);
    g[0] += s;
  } else {
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * coef(i);
  }
}

// y = f(x) with dy/dx = df(x, y).
template <typename F, typename DF>
Var unary(const Var& x, const char* name, F f, DF df) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  const std::size_t in = x.id();
  return t.record(
      Tensor::unchecked(xv.shape(), std::move(out)), {in},
      [in, df](Tape& tape, std::size_t self) {
        const Tensor& gout = tape.output_grad(self);
        const Tensor& xin = tape.value(in);
        const Tensor& y = tape.value(self);
        Tensor& g = tape.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * df(xin[i], y[i]);
      },
      name);
}

// Dimensions of a [B, C, N, T] view; rank-2 [C, T] maps to B = N = 1.
struct Dims4 {
  std::size_t b, c, n, t;
};

Dims4 conv_dims(const Tensor& x, const char* op) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (x.rank() == 2) return {1, x.dim(0), 1, x.dim(1)};
  throw DimensionError(std::string(op) + ": expected [C, T] or [B, C, N, T] input, got " +
                       shape_string(x.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Bcast kind = broadcast_kind(a.value(), b.value(), "add");
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(out), {ia, ib},
      [ia, ib, kind](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        auto one = [](std::size_t) { return 1.0; };
        scatter_grad(tape, ia, g, kind == Bcast::kLeftScalar, one);
        scatter_grad(tape, ib, g, kind == Bcast::kRightScalar, one);
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Bcast kind = broadcast_kind(a.value(), b.value(), "sub");
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(out), {ia, ib},
      [ia, ib, kind](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        scatter_grad(tape, ia, g, kind == Bcast::kLeftScalar, [](std::size_t) { return 1.0; });
        scatter_grad(tape, ib, g, kind == Bcast::kRightScalar, [](std::size_t) { return -1.0; });
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Bcast kind = broadcast_kind(a.value(), b.value(), "mul");
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(out), {ia, ib},
      [ia, ib, kind](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        const Tensor& av = tape.value(ia);
        const Tensor& bv = tape.value(ib);
        scatter_grad(tape, ia, g, kind == Bcast::kLeftScalar, [&](std::size_t i) {
          return kind == Bcast::kRightScalar ? bv[0] : bv[i];
        });
        scatter_grad(tape, ib, g, kind == Bcast::kRightScalar, [&](std::size_t i) {
          return kind == Bcast::kLeftScalar ? av[0] : av[i];
        });
      },
      "mul");
}

Var scale(const Var& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var tanh(const Var& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(const Var& x) {
  const Tensor& v = x.value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) {
      throw DomainError("log of nonpositive value " + std::to_string(v[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary(
      x, "log", [](double u) { return std::log(u); }, [](double u, double) { return 1.0 / u; });
}

Var exp(const Var& x) {
  return unary(
      x, "exp", [](double u) { return std::exp(u); }, [](double, double y) { return y; });
}

Var abs(const Var& x) {
  return unary(
      x, "abs", [](double u) { return std::abs(u); },
      [](double u, double) { return u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary(
      x, "square", [](double u) { return u * u; }, [](double u, double) { return 2.0 * u; });
}

Var dropout(const Var& x, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw DomainError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  const std::uint64_t seed = rng.next_u64();
  Rng local(seed);
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> m(xv.size());
  for (double& mi : m) mi = local.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * m[i];
  const std::size_t in = x.id();
  return x.tape().record(
      Tensor::unchecked(xv.shape(), std::move(out)), {in},
      [in, m = std::move(m)](Tape& tape, std::size_t self) {
        const Tensor& gout = tape.output_grad(self);
        Tensor& g = tape.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * m[i];
      },
      "dropout", seed);
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(out), {ia, ib},
      [ia, ib](Tape& tape, std::size_t self) {
        const Tensor& g = tape.output_grad(self);
        if (tape.requires_grad(ia)) {
          accumulate(tape.grad_buffer(ia), matmul(g, transpose(tape.value(ib))));
        }
        if (tape.requires_grad(ib)) {
          accumulate(tape.grad_buffer(ib), matmul(transpose(tape.value(ia)), g));
        }
      },
      "matmul");
}

Var transpose(const Var& a) {
  Tensor out = transpose(a.value());
  const std::size_t in = a.id();
  return a.tape().record(
      std::move(out), {in},
      [in](Tape& tape, std::size_t self) {
        accumulate(tape.grad_buffer(in), transpose(tape.output_grad(self)));
      },
      "transpose");
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t in = x.id();
  return x.tape().record(
      Tensor::unchecked({}, {s}), {in},
      [in](Tape& tape, std::size_t self) {
        const double g = tape.output_grad(self)[0];
        Tensor& gi = tape.grad_buffer(in);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g;
      },
      "sum");
}

Var mean(const Var& x) {
  const std::size_t n = x.size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t in = x.id();
  return x.tape().record(
      std::move(out), {in},
      [in](Tape& tape, std::size_t self) {
        accumulate(tape.grad_buffer(in), tape.output_grad(self));
      },
      "reshape");
}

Var mask(const Var& x, const Tensor& m) {
  const Tensor& xv = x.value();
  if (m.shape() != xv.shape()) {
    throw DimensionError("mask shape " + shape_string(m.shape()) + " does not match " +
                         shape_string(xv.shape()));
  }
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * m[i];
  const std::size_t in = x.id();
  return x.tape().record(
      Tensor::unchecked(xv.shape(), std::move(out)), {in},
      [in, m](Tape& tape, std::size_t self) {
        const Tensor& gout = tape.output_grad(self);
        Tensor& g = tape.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * m[i];
      },
      "mask");
}

Var causal_conv1d(const Var& x, const Var& kernel, std::size_t dilation) {
  Tape& tape = same_tape(x, kernel);
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (dilation == 0) throw DomainError("causal_conv1d: dilation must be >= 1");
  const Dims4 d = conv_dims(xv, "causal_conv1d");
  if (d.t == 0 || d.c == 0) throw DimensionError("causal_conv1d: empty input");
  if (kv.rank() != 3 || kv.dim(1) != d.c || kv.dim(2) == 0) {
    throw DimensionError("causal_conv1d: kernel " + shape_string(kv.shape()) +
                         " incompatible with input " + shape_string(xv.shape()));
  }
  const std::size_t co = kv.dim(0), k = kv.dim(2);
  const Dims4 od{d.b, co, d.n, d.t};
  std::vector<double> out(od.b * od.c * od.n * od.t, 0.0);
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t shift = j * dilation;
          if (shift >= d.t) break;
          const double w = kv[(o * d.c + c) * k + j];
          for (std::size_t n = 0; n < d.n; ++n) {
            double* y = out.data() + ((b * co + o) * d.n + n) * d.t;
            const double* xr = xv.data() + ((b * d.c + c) * d.n + n) * d.t;
            for (std::size_t t = shift; t < d.t; ++t) y[t] += w * xr[t - shift];
          }
        }
  Shape shape = xv.rank() == 2 ? Shape{co, d.t} : Shape{d.b, co, d.n, d.t};
  const std::size_t ix = x.id(), ik = kernel.id();
  return tape.record(
      Tensor::unchecked(std::move(shape), std::move(out)), {ix, ik},
      [ix, ik, d, co, k, dilation](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        const Tensor& xin = tp.value(ix);
        const Tensor& kin = tp.value(ik);
        const bool need_x = tp.requires_grad(ix);
        const bool need_k = tp.requires_grad(ik);
        double* gx = need_x ? tp.grad_buffer(ix).data() : nullptr;
        double* gk = need_k ? tp.grad_buffer(ik).data() : nullptr;
        for (std::size_t b = 0; b < d.b; ++b)
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t c = 0; c < d.c; ++c)
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t shift = j * dilation;
                if (shift >= d.t) break;
                const std::size_t widx = (o * d.c + c) * k + j;
                const double w = kin[widx];
                double acc = 0.0;
                for (std::size_t n = 0; n < d.n; ++n) {
                  const double* gy = g.data() + ((b * co + o) * d.n + n) * d.t;
                  const std::size_t xoff = ((b * d.c + c) * d.n + n) * d.t;
                  if (need_x) {
                    double* gxr = gx + xoff;
                    for (std::size_t t = shift; t < d.t; ++t) gxr[t - shift] += w * gy[t];
                  }
                  if (need_k) {
                    const double* xr = xin.data() + xoff;
                    for (std::size_t t = shift; t < d.t; ++t) acc += gy[t] * xr[t - shift];
                  }
                }
                if (need_k) gk[widx] += acc;
              }
      },
      "causal_conv1d");
}

Var temporal_dense(const Var& x, const Var& kernel) {
  Tape& tape = same_tape(x, kernel);
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (xv.rank() != 4) {
    throw DimensionError("temporal_dense: expected [B, C, N, T] input, got " +
                         shape_string(xv.shape()));
  }
  const Dims4 d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3)};
  if (kv.rank() != 3 || kv.dim(1) != d.c || kv.dim(2) == 0 || kv.dim(2) > d.t) {
    throw DimensionError("temporal_dense: kernel " + shape_string(kv.shape()) +
                         " incompatible with input " + shape_string(xv.shape()));
  }
  const std::size_t so = kv.dim(0), k = kv.dim(2);
  std::vector<double> out(d.b * so * d.n, 0.0);
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t s = 0; s < so; ++s)
      for (std::size_t n = 0; n < d.n; ++n) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double* w = kv.data() + (s * d.c + c) * k;
          const double* xr = xv.data() + ((b * d.c + c) * d.n + n) * d.t + (d.t - 1);
          for (std::size_t j = 0; j < k; ++j) acc += w[j] * *(xr - j);
        }
        out[(b * so + s) * d.n + n] = acc;
      }
  const std::size_t ix = x.id(), ik = kernel.id();
  return tape.record(
      Tensor::unchecked({d.b, so, d.n, 1}, std::move(out)), {ix, ik},
      [ix, ik, d, so, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        const Tensor& xin = tp.value(ix);
        const Tensor& kin = tp.value(ik);
        const bool need_x = tp.requires_grad(ix);
        const bool need_k = tp.requires_grad(ik);
        double* gx = need_x ? tp.grad_buffer(ix).data() : nullptr;
        double* gk = need_k ? tp.grad_buffer(ik).data() : nullptr;
        for (std::size_t b = 0; b < d.b; ++b)
          for (std::size_t s = 0; s < so; ++s)
            for (std::size_t n = 0; n < d.n; ++n) {
              const double gy = g[(b * so + s) * d.n + n];
              if (gy == 0.0) continue;
              for (std::size_t c = 0; c < d.c; ++c) {
                const std::size_t woff = (s * d.c + c) * k;
                const std::size_t xend = ((b * d.c + c) * d.n + n) * d.t + (d.t - 1);
                for (std::size_t j = 0; j < k; ++j) {
                  if (need_x) gx[xend - j] += gy * kin[woff + j];
                  if (need_k) gk[woff + j] += gy * xin[xend - j];
                }
              }
            }
      },
      "temporal_dense");
}

Var channel_mix(const Var& x, const Var& weight) {
  Tape& tape = same_tape(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 4) {
    throw DimensionError("channel_mix: expected [B, C, N, T] input, got " +
                         shape_string(xv.shape()));
  }
  const Dims4 d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3)};
  if (wv.rank() != 2 || wv.dim(1) != d.c) {
    throw DimensionError("channel_mix: weight " + shape_string(wv.shape()) +
                         " incompatible with input " + shape_string(xv.shape()));
  }
  const std::size_t co = wv.dim(0);
  const std::size_t plane = d.n * d.t;
  std::vector<double> out(d.b * co * plane, 0.0);
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t o = 0; o < co; ++o) {
      double* y = out.data() + (b * co + o) * plane;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double w = wv[o * d.c + c];
        const double* xr = xv.data() + (b * d.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) y[i] += w * xr[i];
      }
    }
  const std::size_t ix = x.id(), iw = weight.id();
  return tape.record(
      Tensor::unchecked({d.b, co, d.n, d.t}, std::move(out)), {ix, iw},
      [ix, iw, d, co, plane](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        const Tensor& xin = tp.value(ix);
        const Tensor& win = tp.value(iw);
        const bool need_x = tp.requires_grad(ix);
        const bool need_w = tp.requires_grad(iw);
        double* gx = need_x ? tp.grad_buffer(ix).data() : nullptr;
        double* gw = need_w ? tp.grad_buffer(iw).data() : nullptr;
        for (std::size_t b = 0; b < d.b; ++b)
          for (std::size_t o = 0; o < co; ++o) {
            const double* gy = g.data() + (b * co + o) * plane;
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t xoff = (b * d.c + c) * plane;
              if (need_x) {
                const double w = win[o * d.c + c];
                double* gxr = gx + xoff;
                for (std::size_t i = 0; i < plane; ++i) gxr[i] += w * gy[i];
              }
              if (need_w) {
                const double* xr = xin.data() + xoff;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += gy[i] * xr[i];
                gw[o * d.c + c] += acc;
              }
            }
          }
      },
      "channel_mix");
}

Var bias_add(const Var& x, const Var& bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() < 2 || bv.size() != xv.dim(1)) {
    throw DimensionError("bias_add: bias " + shape_string(bv.shape()) +
                         " does not match axis 1 of " + shape_string(xv.shape()));
  }
  const std::size_t outer = xv.dim(0), channels = xv.dim(1);
  const std::size_t inner = xv.size() / (outer * channels);
  std::vector<double> out(xv.values().begin(), xv.values().end());
  for (std::size_t b = 0; b < outer; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* y = out.data() + (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) y[i] += bv[c];
    }
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record(
      Tensor::unchecked(xv.shape(), std::move(out)), {ix, ib},
      [ix, ib, outer, channels, inner](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        if (tp.requires_grad(ix)) accumulate(tp.grad_buffer(ix), g);
        if (tp.requires_grad(ib)) {
          Tensor& gb = tp.grad_buffer(ib);
          for (std::size_t b = 0; b < outer; ++b)
            for (std::size_t c = 0; c < channels; ++c) {
              const double* gy = g.data() + (b * channels + c) * inner;
              double acc = 0.0;
              for (std::size_t i = 0; i < inner; ++i) acc += gy[i];
              gb[c] += acc;
            }
        }
      },
      "bias_add");
}

Var node_mix(const Var& x, const Var& m) {
  Tape& tape = same_tape(x, m);
  const Tensor& xv = x.value();
  const Tensor& mv = m.value();
  if (xv.rank() != 4) {
    throw DimensionError("node_mix: expected [B, C, N, T] input, got " + shape_string(xv.shape()));
  }
  const Dims4 d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3)};
  if (mv.rank() != 2 || mv.dim(0) != d.n || mv.dim(1) != d.n) {
    throw DimensionError("node_mix: matrix " + shape_string(mv.shape()) +
                         " does not match node axis of " + shape_string(xv.shape()));
  }
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t bc = 0; bc < d.b * d.c; ++bc) {
    const double* xs = xv.data() + bc * d.n * d.t;
    double* ys = out.data() + bc * d.n * d.t;
    for (std::size_t i = 0; i < d.n; ++i)
      for (std::size_t j = 0; j < d.n; ++j) {
        const double w = mv[i * d.n + j];
        if (w == 0.0) continue;
        for (std::size_t t = 0; t < d.t; ++t) ys[i * d.t + t] += w * xs[j * d.t + t];
      }
  }
  const std::size_t ix = x.id(), im = m.id();
  return tape.record(
      Tensor::unchecked(xv.shape(), std::move(out)), {ix, im},
      [ix, im, d](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        const Tensor& xin = tp.value(ix);
        const Tensor& min = tp.value(im);
        const bool need_x = tp.requires_grad(ix);
        const bool need_m = tp.requires_grad(im);
        double* gx = need_x ? tp.grad_buffer(ix).data() : nullptr;
        double* gm = need_m ? tp.grad_buffer(im).data() : nullptr;
        for (std::size_t bc = 0; bc < d.b * d.c; ++bc) {
          const double* xs = xin.data() + bc * d.n * d.t;
          const double* gs = g.data() + bc * d.n * d.t;
          for (std::size_t i = 0; i < d.n; ++i)
            for (std::size_t j = 0; j < d.n; ++j) {
              if (need_x) {
                const double w = min[i * d.n + j];
                double* gxs = gx + bc * d.n * d.t + j * d.t;
                for (std::size_t t = 0; t < d.t; ++t) gxs[t] += w * gs[i * d.t + t];
              }
              if (need_m) {
                double acc = 0.0;
                for (std::size_t t = 0; t < d.t; ++t) acc += gs[i * d.t + t] * xs[j * d.t + t];
                gm[i * d.n + j] += acc;
              }
            }
        }
      },
      "node_mix");
}

Var row_normalize_with_self_loops(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.dim(0) != av.dim(1)) {
    throw DimensionError("row_normalize_with_self_loops needs a square matrix, got " +
                         shape_string(av.shape()));
  }
  const std::size_t n = av.dim(0);
  std::vector<double> out(n * n);
  std::vector<double> row_sum(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (av.at(i, j) < 0.0) throw DomainError("adjacency weights must be nonnegative");
      s += av.at(i, j);
    }
    row_sum[i] = s;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (av.at(i, j) + (i == j ? 1.0 : 0.0)) / s;
  }
  const std::size_t in = a.id();
  return a.tape().record(
      Tensor::unchecked({n, n}, std::move(out)), {in},
      [in, n, row_sum = std::move(row_sum)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.output_grad(self);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_buffer(in);
        for (std::size_t i = 0; i < n; ++i) {
          // d y_ij / d a_ik = (delta_jk - y_ij) / s_i
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
          for (std::size_t k = 0; k < n; ++k) ga[i * n + k] += (g[i * n + k] - dot) / row_sum[i];
        }
      },
      "row_normalize");
}

Var l1_loss(const Var& pred, const Tensor& target) {
  const Tensor& pv = pred.value();
  if (pv.shape() != target.shape()) {
    throw DimensionError("l1_loss: prediction " + shape_string(pv.shape()) +
                         " vs target " + shape_string(target.shape()));
  }
  const std::size_t n = pv.size();
  if (n == 0) throw DimensionError("l1_loss on empty tensors");
  std::vector<double> sign(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pv[i] - target[i];
    s += std::abs(diff);
    sign[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t in = pred.id();
  return pred.tape().record(
      Tensor::unchecked({}, {s * inv_n}), {in},
      [in, inv_n, sign = std::move(sign)](Tape& tp, std::size_t self) {
        const double g = tp.output_grad(self)[0] * inv_n;
        Tensor& gp = tp.grad_buffer(in);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * sign[i];
      },
      "l1_loss");
}

}  // namespace marketgraph
