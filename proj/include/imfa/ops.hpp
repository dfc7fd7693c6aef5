// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable kernels. Every function records a node on the tape of its
// operands (if any operand is on a tape) and returns a constant otherwise.
// Matrices are rank-2 row-major tensors; "rows" of a higher-rank tensor are
// its leading-axis slices.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "imfa/tensor.hpp"

namespace imfa {

/// Normalized image coordinate: (0,0) is the top-left corner, (1,1) bottom-right.
struct Point2 {
  double x = 0;
  double y = 0;
};

// Elementwise, identical shapes.
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> minimum(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> maximum(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real> Tensor<Real> scale(const Tensor<Real>& x, Real s);
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& x, Real s);
template <typename Real> Tensor<Real> relu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);
template <typename Real> Tensor<Real> exp(const Tensor<Real>& x);
/// Natural log; throws NumericError on non-positive input.
template <typename Real> Tensor<Real> log(const Tensor<Real>& x);
template <typename Real> Tensor<Real> abs(const Tensor<Real>& x);
/// log(x / (1 - x)) with x clamped to [eps, 1 - eps].
template <typename Real> Tensor<Real> inverse_sigmoid(const Tensor<Real>& x, Real eps = Real(1e-5));

/// x[..., n] + b[n], broadcast over all leading positions.
template <typename Real> Tensor<Real> add_row(const Tensor<Real>& x, const Tensor<Real>& b);
/// Row r of x scaled by w[r]; w has one entry per leading-axis slice.
template <typename Real> Tensor<Real> mul_rows(const Tensor<Real>& x, const Tensor<Real>& w);

template <typename Real> Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x);

template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
/// x[m×k]·w[k×n] + b[n].
template <typename Real> Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b);

template <typename Real> Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t begin, std::size_t end);
template <typename Real> Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts);
template <typename Real> Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows);
template <typename Real> Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t begin, std::size_t end);
template <typename Real> Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);

/// Softmax along `axis`, computed with max subtraction. Throws NumericError on non-finite input.
template <typename Real> Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);
/// Normalizes each last-axis vector to zero mean and unit variance, then applies gain and bias.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real eps);

/// Scaled dot-product attention split into `heads` column groups:
/// per head softmax(q kᵀ / sqrt(d/heads)) v, heads concatenated. No projections.
template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, std::size_t heads);
/// Attention probabilities of one head as a constant [A×B] matrix (inspection only).
template <typename Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t heads, std::size_t head);

/// Bilinear interpolation of grid[H×W×d] at points[P×2] (x, y normalized).
/// Cell (i, j) is centred at ((j + 0.5)/W, (i + 0.5)/H); coordinates beyond the
/// outermost centres clamp to the border. Differentiable in grid and points.
template <typename Real> Tensor<Real> bilinear_sample(const Tensor<Real>& grid, const Tensor<Real>& points);

/// 2×2 average pooling of grid[H×W×d]; H and W must be even.
template <typename Real> Tensor<Real> avg_pool2x2(const Tensor<Real>& grid);

/// For each group g, out[g·m + j] = W_g · x[g·m + j], where W_g is row g of
/// `weights` reshaped to [out_dim × in_dim] and m = rows(x) / groups.
template <typename Real>
Tensor<Real> grouped_matvec(const Tensor<Real>& weights, const Tensor<Real>& x, std::size_t out_dim,
                            std::size_t in_dim);

/// Sine/cosine encoding of points[P×2] into d channels (y half first, then x).
/// Differentiable in the point coordinates. d must be divisible by 4.
template <typename Real> Tensor<Real> sine_embed_points(const Tensor<Real>& points, std::size_t d);

/// Sum over all entries of the sigmoid focal loss against constant 0/1 targets.
template <typename Real>
Tensor<Real> sigmoid_focal_loss(const Tensor<Real>& logits, const Tensor<Real>& targets, Real alpha, Real gamma);

}  // namespace imfa
