// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ide/tensor.hpp"

namespace ide {

// ---------------------------------------------------------------------------
// Elementwise. Binary ops broadcast with trailing-axis alignment.

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b);

template <typename S> Tensor<S> neg(const Tensor<S>& x);
template <typename S> Tensor<S> scale(const Tensor<S>& x, S factor);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& x, S offset);

template <typename S> Tensor<S> exp(const Tensor<S>& x);
template <typename S> Tensor<S> log(const Tensor<S>& x);
template <typename S> Tensor<S> tanh(const Tensor<S>& x);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);
template <typename S> Tensor<S> silu(const Tensor<S>& x);
template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> square(const Tensor<S>& x);
template <typename S> Tensor<S> abs(const Tensor<S>& x);
template <typename S> Tensor<S> sqrt(const Tensor<S>& x);
// Gradient passes only where lo < x < hi.
template <typename S> Tensor<S> clamp(const Tensor<S>& x, S lo, S hi);

template <typename S> Tensor<S> detach(const Tensor<S>& x) { return x.detach(); }

template <typename S> Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S> Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S> Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S> Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }
template <typename S> Tensor<S> operator-(const Tensor<S>& x) { return neg(x); }
template <typename S> Tensor<S> operator*(const Tensor<S>& x, S k) { return scale(x, k); }
template <typename S> Tensor<S> operator*(S k, const Tensor<S>& x) { return scale(x, k); }
template <typename S> Tensor<S> operator+(const Tensor<S>& x, S k) { return add_scalar(x, k); }

// ---------------------------------------------------------------------------
// Reductions.

template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);
// Mean over one axis; the axis is removed from the result.
template <typename S> Tensor<S> mean_axis(const Tensor<S>& x, int axis);

// ---------------------------------------------------------------------------
// Shape manipulation.

template <typename S> Tensor<S> reshape(const Tensor<S>& x, const Shape& shape);
template <typename S> Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm);
template <typename S> Tensor<S> transpose(const Tensor<S>& x);  // rank 2
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis);
template <typename S> Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index length);
template <typename S> Tensor<S> broadcast_to(const Tensor<S>& x, const Shape& shape);
// Rows of a [V x C] table selected by id; result is [ids.size() x C].
template <typename S> Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int>& ids);

// ---------------------------------------------------------------------------
// Linear algebra and normalization.

// [M x K] . [K x N] -> [M x N]
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
// [B x M x K] . [B x K x N] -> [B x M x N]
template <typename S> Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b);
// x[..., K] . w[K x N] (+ bias[N]) -> [..., N]
template <typename S> Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias = {});

template <typename S> Tensor<S> softmax(const Tensor<S>& x, int axis = -1);
template <typename S> Tensor<S> log_softmax(const Tensor<S>& x, int axis = -1);
// Normalizes over the last axis.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-5));
// x is [N x C x H x W]; statistics per (sample, group).
template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, int groups, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5));

// ---------------------------------------------------------------------------
// Spatial ops. Rank-3 inputs [C x H x W] are treated as a batch of one.

// Cross-correlation, w is [Cout x Cin x k x k] with k odd, bias optional [Cout].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias = {}, int stride = 1, int pad = 0);
template <typename S> Tensor<S> upsample_nearest2x(const Tensor<S>& x);

/// Backward warp: out(p) = src sampled bilinearly at p + flow(p).
/// Flow channel 0 is horizontal, channel 1 vertical, both in normalized units
/// where 2.0 spans the full image extent (pixel centers, no corner alignment),
/// so a displacement of d pixels along an axis of extent W is 2d/W.
/// Samples falling outside the image clamp to the border.
template <typename S> Tensor<S> grid_sample_bilinear(const Tensor<S>& src, const Tensor<S>& flow);

// ---------------------------------------------------------------------------

// Test hook for the gradient harness: perturbs matmul's gradient w.r.t. its
// left operand so the checker can prove it notices.
void set_matmul_grad_corruption(bool enabled);

}  // namespace ide
