// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "imfa/layers.hpp"

namespace imfa {

/// Query/key/value/output projections of one multi-head attention block.
struct AttentionParams {
  LinearLayer query, key, value, output;
  std::size_t d = 0;
  std::size_t heads = 1;

  template <typename Real>
  static AttentionParams create(ParameterSet<Real>& params, Initializer& init, const std::string& name, std::size_t d,
                                std::size_t heads);
};

/// d → 4d → d with a ReLU in between.
struct FeedForwardParams {
  LinearLayer hidden, output;

  template <typename Real>
  static FeedForwardParams create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                  std::size_t d);
};

struct EncoderLayerParams {
  AttentionParams attn;
  FeedForwardParams ffn;
  LayerNormLayer norm_attn, norm_ffn;

  template <typename Real>
  static EncoderLayerParams create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                   std::size_t d, std::size_t heads);
};

struct DecoderLayerParams {
  AttentionParams self_attn, cross_attn;
  FeedForwardParams ffn;
  LayerNormLayer norm_self, norm_cross, norm_ffn;

  template <typename Real>
  static DecoderLayerParams create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                   std::size_t d, std::size_t heads);
};

/// Class head and the three-layer box head, behind a shared LayerNorm.
struct HeadParams {
  LayerNormLayer norm;
  LinearLayer cls;
  LinearLayer box_hidden1, box_hidden2, box_out;
  std::size_t classes = 0;

  template <typename Real>
  static HeadParams create(ParameterSet<Real>& params, Initializer& init, const std::string& name, std::size_t d,
                           std::size_t classes);
};

template <typename Real>
struct QuerySet {
  Tensor<Real> content;  // [N × d]
  Tensor<Real> boxes;    // [N × 4], normalized (cx, cy, w, h)

  std::size_t size() const { return content.dim(0); }
};

template <typename Real>
struct Predictions {
  Tensor<Real> class_logits;  // [N × C]
  Tensor<Real> boxes;         // [N × 4] in (0, 1)
};

/// Projects q, k, v, runs scaled dot-product attention per head and projects the
/// concatenated heads.
template <typename Real>
Tensor<Real> mha(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, ParamBinding<Real>& p,
                 const AttentionParams& params);

template <typename Real>
Tensor<Real> feed_forward(const Tensor<Real>& x, ParamBinding<Real>& p, const FeedForwardParams& params);

/// Pre-norm: x += mha(LN(x) + pos, LN(x) + pos, LN(x)); x += ffn(LN(x)).
template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& tokens, const Tensor<Real>& pos, ParamBinding<Real>& p,
                           const EncoderLayerParams& params);

/// Encoder layer in which only the first `query_rows` tokens are updated; all
/// tokens serve as keys and values. Returns [query_rows × d].
template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& tokens, const Tensor<Real>& pos, std::size_t query_rows,
                           ParamBinding<Real>& p, const EncoderLayerParams& params);

/// Sine encoding of the reference-box centres.
template <typename Real>
Tensor<Real> query_positions(const Tensor<Real>& boxes, std::size_t d);

/// Self-attention among the queries, cross-attention into memory, then the FFN;
/// each pre-normed with a residual. Returns the updated content embeddings.
template <typename Real>
Tensor<Real> decoder_layer(const QuerySet<Real>& queries, const Tensor<Real>& memory, const Tensor<Real>& mem_pos,
                           ParamBinding<Real>& p, const DecoderLayerParams& params);

/// boxes = sigmoid(box_mlp(LN(Q)) + inverse_sigmoid(ref_boxes)).
template <typename Real>
Predictions<Real> prediction_heads(const Tensor<Real>& q, const Tensor<Real>& ref_boxes, ParamBinding<Real>& p,
                                   const HeadParams& params);

}  // namespace imfa
