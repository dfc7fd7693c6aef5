// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/transformer.hpp"

#include <cmath>

namespace imfa {

namespace {

void require_width(const char* op, const char* what, const Shape& s, std::size_t d) {
  if (s.size() != 2 || s[1] != d) {
    throw DimensionError(std::string(op) + ": " + what + " has shape " + shape_string(s) + ", expected [Nx" +
                         std::to_string(d) + "]");
  }
}

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

}  // namespace

template <typename Real>
AttentionParams AttentionParams::create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                        std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads) {
    throw ConfigError(name + ": head count " + std::to_string(heads) + " does not divide d=" + std::to_string(d));
  }
  AttentionParams a;
  a.d = d;
  a.heads = heads;
  a.query = LinearLayer::create(params, init, name + ".q", d, d);
  a.key = LinearLayer::create(params, init, name + ".k", d, d);
  a.value = LinearLayer::create(params, init, name + ".v", d, d);
  a.output = LinearLayer::create(params, init, name + ".o", d, d);
  return a;
}

template <typename Real>
FeedForwardParams FeedForwardParams::create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                            std::size_t d) {
  return {LinearLayer::create(params, init, name + ".fc1", d, 4 * d),
          LinearLayer::create(params, init, name + ".fc2", 4 * d, d)};
}

template <typename Real>
EncoderLayerParams EncoderLayerParams::create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                              std::size_t d, std::size_t heads) {
  EncoderLayerParams e;
  e.attn = AttentionParams::create(params, init, name + ".attn", d, heads);
  e.ffn = FeedForwardParams::create(params, init, name + ".ffn", d);
  e.norm_attn = LayerNormLayer::create(params, name + ".norm1", d);
  e.norm_ffn = LayerNormLayer::create(params, name + ".norm2", d);
  return e;
}

template <typename Real>
DecoderLayerParams DecoderLayerParams::create(ParameterSet<Real>& params, Initializer& init, const std::string& name,
                                              std::size_t d, std::size_t heads) {
  DecoderLayerParams l;
  l.self_attn = AttentionParams::create(params, init, name + ".self_attn", d, heads);
  l.cross_attn = AttentionParams::create(params, init, name + ".cross_attn", d, heads);
  l.ffn = FeedForwardParams::create(params, init, name + ".ffn", d);
  l.norm_self = LayerNormLayer::create(params, name + ".norm1", d);
  l.norm_cross = LayerNormLayer::create(params, name + ".norm2", d);
  l.norm_ffn = LayerNormLayer::create(params, name + ".norm3", d);
  return l;
}

template <typename Real>
HeadParams HeadParams::create(ParameterSet<Real>& params, Initializer& init, const std::string& name, std::size_t d,
                              std::size_t classes) {
  if (classes == 0) throw ConfigError(name + ": class count must be positive");
  HeadParams h;
  h.classes = classes;
  h.norm = LayerNormLayer::create(params, name + ".norm", d);
  h.cls = LinearLayer::create(params, init, name + ".cls", d, classes);
  h.box_hidden1 = LinearLayer::create(params, init, name + ".box1", d, d);
  h.box_hidden2 = LinearLayer::create(params, init, name + ".box2", d, d);
  h.box_out = LinearLayer::create(params, init, name + ".box3", d, 4);
  // Focal-loss prior: every class starts at probability 0.01. The zero box
  // layer makes the first predictions equal the reference boxes.
  params.set(h.cls.bias, Tensor<Real>::full({classes}, static_cast<Real>(-std::log(99.0))));
  params.set(h.box_out.weight, Tensor<Real>::zeros({d, 4}));
  return h;
}

template <typename Real>
Tensor<Real> mha(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, ParamBinding<Real>& p,
                 const AttentionParams& params) {
  require_width("mha", "q", q.shape(), params.d);
  require_width("mha", "k", k.shape(), params.d);
  require_width("mha", "v", v.shape(), params.d);
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError("mha: k " + shape_string(k.shape()) + " and v " + shape_string(v.shape()) +
                         " have different row counts");
  }
  const auto heads = attention(params.query(p, q), params.key(p, k), params.value(p, v), params.heads);
  return params.output(p, heads);
}

template <typename Real>
Tensor<Real> feed_forward(const Tensor<Real>& x, ParamBinding<Real>& p, const FeedForwardParams& params) {
  return params.output(p, relu(params.hidden(p, x)));
}

template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& tokens, const Tensor<Real>& pos, ParamBinding<Real>& p,
                           const EncoderLayerParams& params) {
  require_same("encoder_layer", tokens.shape(), pos.shape());
  const auto n1 = params.norm_attn(p, tokens);
  const auto qk = add(n1, pos);
  const auto x = add(tokens, mha(qk, qk, n1, p, params.attn));
  return add(x, feed_forward(params.norm_ffn(p, x), p, params.ffn));
}

template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& tokens, const Tensor<Real>& pos, std::size_t query_rows,
                           ParamBinding<Real>& p, const EncoderLayerParams& params) {
  require_same("encoder_layer", tokens.shape(), pos.shape());
  if (query_rows == 0 || query_rows > tokens.dim(0)) {
    throw DimensionError("encoder_layer: " + std::to_string(query_rows) + " query rows out of " +
                         shape_string(tokens.shape()));
  }
  if (query_rows == tokens.dim(0)) return encoder_layer(tokens, pos, p, params);
  const auto n1 = params.norm_attn(p, tokens);
  const auto k = add(n1, pos);
  const auto q = slice_rows(k, 0, query_rows);
  const auto x = add(slice_rows(tokens, 0, query_rows), mha(q, k, n1, p, params.attn));
  return add(x, feed_forward(params.norm_ffn(p, x), p, params.ffn));
}

template <typename Real>
Tensor<Real> query_positions(const Tensor<Real>& boxes, std::size_t d) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4) {
    throw DimensionError("query_positions: boxes have shape " + shape_string(boxes.shape()) + ", expected [Nx4]");
  }
  return sine_embed_points(slice_cols(boxes, 0, 2), d);
}

template <typename Real>
Tensor<Real> decoder_layer(const QuerySet<Real>& queries, const Tensor<Real>& memory, const Tensor<Real>& mem_pos,
                           ParamBinding<Real>& p, const DecoderLayerParams& params) {
  require_same("decoder_layer", memory.shape(), mem_pos.shape());
  const std::size_t d = params.self_attn.d;
  require_width("decoder_layer", "queries", queries.content.shape(), d);
  require_width("decoder_layer", "memory", memory.shape(), d);
  if (queries.boxes.rank() != 2 || queries.boxes.dim(0) != queries.size()) {
    throw DimensionError("decoder_layer: boxes " + shape_string(queries.boxes.shape()) + " do not match queries " +
                         shape_string(queries.content.shape()));
  }
  const auto qpos = query_positions(queries.boxes, d);

  const auto n1 = params.norm_self(p, queries.content);
  const auto qk = add(n1, qpos);
  auto x = add(queries.content, mha(qk, qk, n1, p, params.self_attn));

  const auto n2 = params.norm_cross(p, x);
  x = add(x, mha(add(n2, qpos), add(memory, mem_pos), memory, p, params.cross_attn));

  return add(x, feed_forward(params.norm_ffn(p, x), p, params.ffn));
}

template <typename Real>
Predictions<Real> prediction_heads(const Tensor<Real>& q, const Tensor<Real>& ref_boxes, ParamBinding<Real>& p,
                                   const HeadParams& params) {
  if (ref_boxes.rank() != 2 || ref_boxes.dim(1) != 4 || q.rank() != 2 || q.dim(0) != ref_boxes.dim(0)) {
    throw DimensionError("prediction_heads: queries " + shape_string(q.shape()) + " and boxes " +
                         shape_string(ref_boxes.shape()) + " are incompatible");
  }
  const auto x = params.norm(p, q);
  const auto h = relu(params.box_hidden2(p, relu(params.box_hidden1(p, x))));
  const auto offset = params.box_out(p, h);
  return {params.cls(p, x), sigmoid(add(offset, inverse_sigmoid(ref_boxes)))};
}

#define IMFA_TRANSFORMER_INSTANTIATE(Real)                                                                        \
  template AttentionParams AttentionParams::create<Real>(ParameterSet<Real>&, Initializer&, const std::string&,  \
                                                         std::size_t, std::size_t);                              \
  template FeedForwardParams FeedForwardParams::create<Real>(ParameterSet<Real>&, Initializer&, const std::string&, \
                                                             std::size_t);                                       \
  template EncoderLayerParams EncoderLayerParams::create<Real>(ParameterSet<Real>&, Initializer&,                \
                                                               const std::string&, std::size_t, std::size_t);    \
  template DecoderLayerParams DecoderLayerParams::create<Real>(ParameterSet<Real>&, Initializer&,                \
                                                               const std::string&, std::size_t, std::size_t);    \
  template HeadParams HeadParams::create<Real>(ParameterSet<Real>&, Initializer&, const std::string&, std::size_t, \
                                               std::size_t);                                                     \
  template Tensor<Real> mha<Real>(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,                 \
                                  ParamBinding<Real>&, const AttentionParams&);                                  \
  template Tensor<Real> feed_forward<Real>(const Tensor<Real>&, ParamBinding<Real>&, const FeedForwardParams&);  \
  template Tensor<Real> encoder_layer<Real>(const Tensor<Real>&, const Tensor<Real>&, ParamBinding<Real>&,       \
                                            const EncoderLayerParams&);                                          \
  template Tensor<Real> encoder_layer<Real>(const Tensor<Real>&, const Tensor<Real>&, std::size_t,               \
                                            ParamBinding<Real>&, const EncoderLayerParams&);                     \
  template Tensor<Real> query_positions<Real>(const Tensor<Real>&, std::size_t);                                 \
  template Tensor<Real> decoder_layer<Real>(const QuerySet<Real>&, const Tensor<Real>&, const Tensor<Real>&,     \
                                            ParamBinding<Real>&, const DecoderLayerParams&);                     \
  template Predictions<Real> prediction_heads<Real>(const Tensor<Real>&, const Tensor<Real>&, ParamBinding<Real>&, \
                                                    const HeadParams&);

IMFA_TRANSFORMER_INSTANTIATE(float)
IMFA_TRANSFORMER_INSTANTIATE(double)

}  // namespace imfa
