#pragma once

#include <cstddef>

#include "marketgraph/rng.hpp"
#include "marketgraph/tape.hpp"

namespace marketgraph {

// Differentiable operations on tape values.
//
// Binary elementwise ops accept operands of equal shape, or one operand with
// a single element that is broadcast. Convolution-style ops use the batched
// layout [batch, channels, nodes, time]; `causal_conv1d` and `bias_add` also
// accept the unbatched [channels, time] / [batch, features] forms noted below.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
/// Throws DomainError on any nonpositive element.
Var log(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);

/// Inverted dropout. Identity when `train` is false or `p` is 0; otherwise
/// zeroes each element with probability p and scales survivors by 1/(1-p).
/// The mask seed is drawn from `rng` and stored on the tape entry.
Var dropout(const Var& x, double p, bool train, Rng& rng);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum(const Var& x);
Var mean(const Var& x);
Var reshape(const Var& x, Shape shape);
/// Elementwise product with a constant mask; gradients flow where mask != 0.
Var mask(const Var& x, const Tensor& m);

/// Causal dilated convolution along the last axis.
///
/// x is [C_in, T] or [B, C_in, N, T]; kernel is [C_out, C_in, K]. Tap j reads
/// x at t - j*dilation with zero padding on the left, so the output keeps
/// length T and position t never sees inputs after t.
Var causal_conv1d(const Var& x, const Var& kernel, std::size_t dilation);

/// Convolution evaluated only at the final time step with a kernel spanning
/// the last K steps: x [B, C, N, T], kernel [S, C, K] with K <= T -> [B, S, N, 1].
/// Equals the last column of causal_conv1d(x, kernel, 1).
Var temporal_dense(const Var& x, const Var& kernel);

/// 1x1 convolution: x [B, C_in, N, T], weight [C_out, C_in] -> [B, C_out, N, T].
Var channel_mix(const Var& x, const Var& weight);

/// Adds bias[c] along axis 1 of a rank>=2 tensor ([B, C, ...] or [B, C]).
Var bias_add(const Var& x, const Var& bias);

/// Propagation over the node axis: y[b,c,i,t] = sum_j m[i,j] * x[b,c,j,t].
Var node_mix(const Var& x, const Var& m);

/// (A + I) with every row divided by its sum. Requires nonnegative A.
Var row_normalize_with_self_loops(const Var& a);

/// mean(|pred - target|) against a constant target of the same shape.
Var l1_loss(const Var& pred, const Tensor& target);

}  // namespace marketgraph
