// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/stage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace imfa {

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kBaseline:
      return "baseline";
    case PipelineMode::kIterativeEncoding:
      return "iter_enc";
    case PipelineMode::kImfa:
      return "imfa";
  }
  return "unknown";
}

PipelineMode parse_pipeline_mode(const std::string& name) {
  if (name == "baseline") return PipelineMode::kBaseline;
  if (name == "iter_enc") return PipelineMode::kIterativeEncoding;
  if (name == "imfa") return PipelineMode::kImfa;
  throw ConfigError("unknown pipeline mode '" + name + "' (expected baseline, iter_enc or imfa)");
}

std::size_t promising_region_count(std::size_t queries, double ratio) {
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(queries) * ratio + 1e-9));
  return std::max<std::size_t>(1, k);
}

void StageConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("stage config: " + msg); };
  if (num_stages == 0) fail("num_stages must be at least 1");
  if (queries == 0) fail("queries must be at least 1");
  if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) fail("sampling_ratio must lie in (0, 1]");
  if (keypoints == 0) fail("keypoints must be at least 1");
  if (scales == 0 || scales > kPyramidStrides.size()) {
    fail("scales must lie in [1, " + std::to_string(kPyramidStrides.size()) + "]");
  }
  if (d == 0 || d % 4) fail("d=" + std::to_string(d) + " must be a positive multiple of 4");
  if (heads == 0 || d % heads) fail(std::to_string(heads) + " heads do not divide d=" + std::to_string(d));
  if (classes == 0) fail("classes must be at least 1");
}

template <typename Real>
ModelParams register_model(ParameterSet<Real>& params, Initializer& init, const StageConfig& config) {
  config.validate();
  const std::size_t d = config.d, n = config.queries;
  ModelParams m;
  m.config = config;
  m.backbone = register_backbone(params, init, d);
  m.query_embed = params.add("query.embed", init.normal<Real>({n, d}, 1.0));
  // Centres spread over the image, sides between roughly 0.08 and 0.27.
  Buffer<Real> ref(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    ref[i * 4] = static_cast<Real>(-2.0 + 4.0 * init.next_unit());
    ref[i * 4 + 1] = static_cast<Real>(-2.0 + 4.0 * init.next_unit());
    ref[i * 4 + 2] = static_cast<Real>(-2.5 + 1.5 * init.next_unit());
    ref[i * 4 + 3] = static_cast<Real>(-2.5 + 1.5 * init.next_unit());
  }
  m.ref_logits = params.add("query.ref_logits", Tensor<Real>({n, 4}, std::move(ref)));
  for (std::size_t t = 0; t < config.num_stages; ++t) {
    const std::string name = "stage" + std::to_string(t);
    m.encoders.push_back(EncoderLayerParams::create(params, init, name + ".encoder", d, config.heads));
    m.decoders.push_back(DecoderLayerParams::create(params, init, name + ".decoder", d, config.heads));
    m.heads.push_back(HeadParams::create(params, init, name + ".head", d, config.classes));
  }
  if (config.sampling()) {
    SamplerParams s;
    const std::size_t mk = config.keypoints;
    if (config.rep_keypoints) {
      s.keypoint_hidden = LinearLayer::create(params, init, "sampler.keypoint1", d, d);
      s.keypoint_out = LinearLayer::create(params, init, "sampler.keypoint2", d, 2 * mk);
    }
    if (config.ada_scale) s.scale_logits = LinearLayer::create(params, init, "sampler.scale", d, mk * config.scales);
    if (config.dynamic_ffn) s.psi = LinearLayer::create(params, init, "sampler.psi", d, 2 * d * (d / 4));
    s.norm = LayerNormLayer::create(params, "sampler.norm", d);
    m.sampler = s;
  }
  return m;
}

template <typename Real>
std::vector<std::size_t> select_promising(const Tensor<Real>& class_logits, std::size_t k) {
  if (class_logits.rank() != 2) {
    throw DimensionError("select_promising: logits have shape " + shape_string(class_logits.shape()));
  }
  const std::size_t n = class_logits.dim(0), c = class_logits.dim(1);
  if (k == 0 || k > n) {
    throw ConfigError("select_promising: K=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<double> conf(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0;
    for (std::size_t j = 0; j < c; ++j) {
      best = std::max(best, 1.0 / (1.0 + std::exp(-static_cast<double>(class_logits[i * c + j]))));
    }
    conf[i] = best;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return conf[a] > conf[b] || (conf[a] == conf[b] && a < b); });
  order.resize(k);
  return order;
}

namespace {

std::vector<std::size_t> repeat_each(std::size_t k, std::size_t m) {
  std::vector<std::size_t> out(k * m);
  for (std::size_t i = 0; i < k * m; ++i) out[i] = i / m;
  return out;
}

template <typename Real>
Tensor<Real> clamp_unit(const Tensor<Real>& x) {
  return minimum(maximum(x, Tensor<Real>::zeros(x.shape())), Tensor<Real>::full(x.shape(), Real(1)));
}

std::uint64_t stage_seed(std::uint64_t seed, std::size_t stage) { return derive_seed(seed, stage); }

}  // namespace

template <typename Real>
Tensor<Real> keypoints_in_boxes(const Tensor<Real>& fractions, const Tensor<Real>& boxes, std::size_t m) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4 || fractions.rank() != 2 || fractions.dim(1) != 2 ||
      fractions.dim(0) != boxes.dim(0) * m) {
    throw DimensionError("keypoints_in_boxes: fractions " + shape_string(fractions.shape()) + " do not match " +
                         std::to_string(m) + " points per box of " + shape_string(boxes.shape()));
  }
  const auto centre = slice_cols(boxes, 0, 2);
  const auto half = scale(slice_cols(boxes, 2, 4), Real(0.5));
  const auto lo = clamp_unit(sub(centre, half));
  const auto hi = clamp_unit(add(centre, half));
  const auto owner = repeat_each(boxes.dim(0), m);
  const auto lo_r = gather_rows(lo, owner);
  const auto hi_r = gather_rows(hi, owner);
  const auto pts = add(lo_r, mul(fractions, sub(hi_r, lo_r)));
  // Rounding in lo + u·(hi − lo) can step one ulp past hi.
  return minimum(maximum(pts, lo_r), hi_r);
}

template <typename Real>
Tensor<Real> predict_keypoints(const Tensor<Real>& region_queries, const Tensor<Real>& region_boxes,
                               ParamBinding<Real>& p, const SamplerParams& sampler, std::size_t m) {
  if (!sampler.keypoint_hidden || !sampler.keypoint_out) {
    throw ContractError("predict_keypoints: keypoint MLP is disabled in this model");
  }
  const auto h = relu((*sampler.keypoint_hidden)(p, region_queries));
  const auto logits = (*sampler.keypoint_out)(p, h).reshaped({region_queries.dim(0) * m, 2});
  return keypoints_in_boxes(sigmoid(logits), region_boxes, m);
}

template <typename Real>
Tensor<Real> scale_weights(const Tensor<Real>& region_queries, ParamBinding<Real>& p, const SamplerParams& sampler,
                           std::size_t m, std::size_t s) {
  if (!sampler.scale_logits) throw ContractError("scale_weights: scale heads are disabled in this model");
  const auto logits = (*sampler.scale_logits)(p, region_queries).reshaped({region_queries.dim(0) * m, s});
  return softmax(logits, 1);
}

template <typename Real>
Tensor<Real> sample_scale_adaptive(const Tensor<Real>& points, const Tensor<Real>& alpha,
                                   const std::vector<Tensor<Real>>& levels) {
  if (alpha.rank() != 2 || alpha.dim(1) != levels.size() || alpha.dim(0) != points.dim(0)) {
    throw DimensionError("sample_scale_adaptive: weights " + shape_string(alpha.shape()) + " do not match " +
                         std::to_string(points.dim(0)) + " points over " + std::to_string(levels.size()) + " levels");
  }
  Tensor<Real> out;
  for (std::size_t s = 0; s < levels.size(); ++s) {
    const auto term = mul_rows(bilinear_sample(levels[s], points), slice_cols(alpha, s, s + 1));
    out = s == 0 ? term : add(out, term);
  }
  return out;
}

template <typename Real>
Tensor<Real> dynamic_ffn(const Tensor<Real>& features, const Tensor<Real>& region_queries, ParamBinding<Real>& p,
                         const SamplerParams& sampler, std::size_t d) {
  if (!sampler.psi) return sampler.norm(p, features);
  const std::size_t h = d / 4;
  const auto w = (*sampler.psi)(p, region_queries);
  const auto w1 = slice_cols(w, 0, h * d);
  const auto w2 = slice_cols(w, h * d, 2 * h * d);
  const auto hidden = relu(grouped_matvec(w1, features, h, d));
  return sampler.norm(p, add(features, grouped_matvec(w2, hidden, d, h)));
}

template <typename Real>
SampledTokenSet<Real> build_sampled_tokens(const StageState<Real>& prev, const FeaturePyramid<Real>& pyramid,
                                           ParamBinding<Real>& p, const ModelParams& model, std::size_t stage,
                                           std::uint64_t sample_seed, const std::vector<std::size_t>* regions) {
  const auto& cfg = model.config;
  if (!model.sampler) throw ContractError("build_sampled_tokens: model has no sampler");
  if (pyramid.size() < cfg.scales) {
    throw ConfigError("pyramid has " + std::to_string(pyramid.size()) + " levels, config samples " +
                      std::to_string(cfg.scales));
  }
  const auto& sampler = *model.sampler;
  const std::size_t k = cfg.regions(), m = cfg.keypoints, s = cfg.scales;

  SampledTokenSet<Real> out;
  out.regions = regions ? *regions : select_promising(prev.predictions.class_logits, k);
  if (out.regions.size() != k) throw ContractError("build_sampled_tokens: replayed region count differs from K");
  const auto queries = gather_rows(prev.queries.content, out.regions);
  out.region_boxes = gather_rows(prev.predictions.boxes, out.regions);

  if (sampler.keypoint_out) {
    out.keypoints = predict_keypoints(queries, out.region_boxes, p, sampler, m);
  } else {
    std::mt19937_64 rng(stage_seed(sample_seed, stage));
    Buffer<Real> u(k * m * 2);
    for (auto& v : u) v = static_cast<Real>(unit_double(rng));
    out.keypoints = keypoints_in_boxes(Tensor<Real>({k * m, 2}, std::move(u)), out.region_boxes, m);
  }
  out.scale_weights = sampler.scale_logits ? scale_weights(queries, p, sampler, m, s)
                                           : Tensor<Real>::full({k * m, s}, static_cast<Real>(1.0 / s));

  std::vector<Tensor<Real>> levels;
  for (std::size_t l = pyramid.size() - s; l < pyramid.size(); ++l) levels.push_back(pyramid.levels[l].grid);
  const auto features = sample_scale_adaptive(out.keypoints, out.scale_weights, levels);
  out.features = dynamic_ffn(features, queries, p, sampler, cfg.d);

  out.owner_query.resize(k * m);
  out.ids.resize(k * m);
  for (std::size_t r = 0; r < k * m; ++r) {
    out.owner_query[r] = out.regions[r / m];
    out.ids[r] = (static_cast<std::uint64_t>(stage) << 32) | r;
  }
  return out;
}

template <typename Real>
StageState<Real> initial_state(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p, const ModelParams& model) {
  const auto& grid = pyramid.coarsest().grid;
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = model.config.d;
  if (grid.dim(2) != d) {
    throw ConfigError("pyramid width " + std::to_string(grid.dim(2)) + " differs from d=" + std::to_string(d));
  }
  StageState<Real> st;
  st.image_tokens = grid.reshaped({h * w, d});
  st.image_pos = sine_positions<Real>(h, w, d);
  st.queries = {p(model.query_embed), sigmoid(p(model.ref_logits))};
  st.encoder_token_ids.resize(h * w);
  std::iota(st.encoder_token_ids.begin(), st.encoder_token_ids.end(), 0);
  return st;
}

template <typename Real>
StageState<Real> run_stage(const StageState<Real>& prev, const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                           const ModelParams& model, std::size_t stage, std::uint64_t sample_seed,
                           const FrozenDecisions<Real>* frozen) {
  const auto& cfg = model.config;
  if (stage >= cfg.num_stages) {
    throw ConfigError("stage " + std::to_string(stage) + " out of " + std::to_string(cfg.num_stages));
  }
  if (stage > 0 && prev.predictions.class_logits.empty()) {
    throw ContractError("run_stage: stage " + std::to_string(stage) + " needs the previous stage's predictions");
  }
  const std::size_t t_img = prev.image_tokens.dim(0);

  StageState<Real> st;
  st.image_pos = prev.image_pos;
  st.encoder_token_ids.resize(t_img);
  std::iota(st.encoder_token_ids.begin(), st.encoder_token_ids.end(), 0);

  Tensor<Real> tokens = prev.image_tokens, pos = prev.image_pos;
  if (cfg.sampling() && stage > 0) {
    const auto* regions = frozen ? &frozen->regions.at(stage) : nullptr;
    st.sampled = build_sampled_tokens(prev, pyramid, p, model, stage, sample_seed, regions);
    tokens = concat_rows<Real>({tokens, st.sampled->features});
    pos = concat_rows<Real>({pos, sine_positions(st.sampled->keypoints, cfg.d)});
    st.encoder_token_ids.insert(st.encoder_token_ids.end(), st.sampled->ids.begin(), st.sampled->ids.end());
  }

  const auto& enc = model.encoders[stage];
  const bool keys_only = st.sampled && cfg.sampled_keys_only;
  const auto encoded = keys_only ? encoder_layer(tokens, pos, t_img, p, enc) : encoder_layer(tokens, pos, p, enc);
  const auto image_out = st.sampled && !keys_only ? slice_rows(encoded, 0, t_img) : encoded;
  st.image_tokens = stage > 0 ? add(image_out, prev.image_tokens) : image_out;

  Tensor<Real> memory = st.image_tokens;
  if (st.sampled) {
    const auto sampled_out = keys_only ? st.sampled->features : slice_rows(encoded, t_img, encoded.dim(0));
    memory = concat_rows<Real>({st.image_tokens, sampled_out});
  }

  Tensor<Real> ref = prev.queries.boxes;
  if (stage > 0) ref = frozen ? frozen->reference_boxes.at(stage) : detach(prev.predictions.boxes);
  const auto content = decoder_layer(QuerySet<Real>{prev.queries.content, ref}, memory, pos, p, model.decoders[stage]);
  st.queries = {content, ref};
  st.predictions = prediction_heads(content, ref, p, model.heads[stage]);
  return st;
}

namespace {

template <typename Real>
PipelineResult<Real> run_baseline(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                                  const ModelParams& model, const FrozenDecisions<Real>* frozen) {
  const auto init = initial_state(pyramid, p, model);
  Tensor<Real> memory = init.image_tokens;
  for (const auto& enc : model.encoders) memory = encoder_layer(memory, init.image_pos, p, enc);

  PipelineResult<Real> out;
  Tensor<Real> content = init.queries.content, ref = init.queries.boxes;
  for (std::size_t l = 0; l < model.decoders.size(); ++l) {
    if (l > 0 && frozen) ref = frozen->reference_boxes.at(l);
    StageState<Real> st;
    st.image_tokens = memory;
    st.image_pos = init.image_pos;
    st.encoder_token_ids = init.encoder_token_ids;
    st.queries = {decoder_layer(QuerySet<Real>{content, ref}, memory, init.image_pos, p, model.decoders[l]), ref};
    st.predictions = prediction_heads(st.queries.content, ref, p, model.heads[l]);
    content = st.queries.content;
    ref = detach(st.predictions.boxes);
    out.stages.push_back(std::move(st));
  }
  return out;
}

}  // namespace

template <typename Real>
PipelineResult<Real> run_pipeline(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                                  const ModelParams& model, std::uint64_t sample_seed,
                                  const FrozenDecisions<Real>* frozen) {
  if (model.config.mode == PipelineMode::kBaseline) return run_baseline(pyramid, p, model, frozen);
  PipelineResult<Real> out;
  StageState<Real> st = initial_state(pyramid, p, model);
  for (std::size_t t = 0; t < model.config.num_stages; ++t) {
    st = run_stage(st, pyramid, p, model, t, sample_seed, frozen);
    out.stages.push_back(st);
  }
  return out;
}

template <typename Real>
PipelineResult<Real> run_pipeline(const Image& img, ParamBinding<Real>& p, const ModelParams& model,
                                  std::uint64_t sample_seed, const FrozenDecisions<Real>* frozen) {
  return run_pipeline(run_backbone(img, p, model.backbone), p, model, sample_seed, frozen);
}

template <typename Real>
FrozenDecisions<Real> freeze(const PipelineResult<Real>& result) {
  FrozenDecisions<Real> f;
  for (std::size_t t = 0; t < result.stages.size(); ++t) {
    const auto& st = result.stages[t];
    f.reference_boxes.push_back(t == 0 ? Tensor<Real>() : st.queries.boxes.constant());
    f.regions.push_back(st.sampled ? st.sampled->regions : std::vector<std::size_t>{});
  }
  return f;
}

template <typename Real>
std::vector<Predictions<Real>> run_iterative_reference(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                                                       const ModelParams& model) {
  const auto& grid = pyramid.coarsest().grid;
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = model.config.d;
  const auto pos = sine_positions<Real>(h, w, d);
  Tensor<Real> x = grid.reshaped({h * w, d});
  Tensor<Real> content = p(model.query_embed);
  Tensor<Real> ref = sigmoid(p(model.ref_logits));
  std::vector<Predictions<Real>> out;
  for (std::size_t t = 0; t < model.config.num_stages; ++t) {
    const auto encoded = encoder_layer(x, pos, p, model.encoders[t]);
    x = t == 0 ? encoded : add(encoded, x);
    content = decoder_layer(QuerySet<Real>{content, ref}, x, pos, p, model.decoders[t]);
    out.push_back(prediction_heads(content, ref, p, model.heads[t]));
    ref = detach(out.back().boxes);
  }
  return out;
}

#define IMFA_STAGE_INSTANTIATE(Real)                                                                             \
  template ModelParams register_model<Real>(ParameterSet<Real>&, Initializer&, const StageConfig&);             \
  template std::vector<std::size_t> select_promising<Real>(const Tensor<Real>&, std::size_t);                  \
  template Tensor<Real> keypoints_in_boxes<Real>(const Tensor<Real>&, const Tensor<Real>&, std::size_t);       \
  template Tensor<Real> predict_keypoints<Real>(const Tensor<Real>&, const Tensor<Real>&, ParamBinding<Real>&, \
                                                const SamplerParams&, std::size_t);                            \
  template Tensor<Real> scale_weights<Real>(const Tensor<Real>&, ParamBinding<Real>&, const SamplerParams&,    \
                                            std::size_t, std::size_t);                                         \
  template Tensor<Real> sample_scale_adaptive<Real>(const Tensor<Real>&, const Tensor<Real>&,                  \
                                                    const std::vector<Tensor<Real>>&);                         \
  template Tensor<Real> dynamic_ffn<Real>(const Tensor<Real>&, const Tensor<Real>&, ParamBinding<Real>&,       \
                                          const SamplerParams&, std::size_t);                                  \
  template SampledTokenSet<Real> build_sampled_tokens<Real>(const StageState<Real>&, const FeaturePyramid<Real>&, \
                                                            ParamBinding<Real>&, const ModelParams&,           \
                                                            std::size_t, std::uint64_t,                        \
                                                            const std::vector<std::size_t>*);                  \
  template StageState<Real> initial_state<Real>(const FeaturePyramid<Real>&, ParamBinding<Real>&,              \
                                                const ModelParams&);                                           \
  template StageState<Real> run_stage<Real>(const StageState<Real>&, const FeaturePyramid<Real>&,              \
                                            ParamBinding<Real>&, const ModelParams&, std::size_t, std::uint64_t,   \
                                            const FrozenDecisions<Real>*);                                         \
  template PipelineResult<Real> run_pipeline<Real>(const FeaturePyramid<Real>&, ParamBinding<Real>&,           \
                                                   const ModelParams&, std::uint64_t,                          \
                                                   const FrozenDecisions<Real>*);                              \
  template PipelineResult<Real> run_pipeline<Real>(const Image&, ParamBinding<Real>&, const ModelParams&,      \
                                                   std::uint64_t, const FrozenDecisions<Real>*);               \
  template FrozenDecisions<Real> freeze<Real>(const PipelineResult<Real>&);                                    \
  template std::vector<Predictions<Real>> run_iterative_reference<Real>(const FeaturePyramid<Real>&,           \
                                                                        ParamBinding<Real>&, const ModelParams&);

IMFA_STAGE_INSTANTIATE(float)
IMFA_STAGE_INSTANTIATE(double)

}  // namespace imfa
