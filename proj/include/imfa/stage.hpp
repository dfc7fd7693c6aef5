// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "imfa/feature_pyramid.hpp"
#include "imfa/transformer.hpp"

namespace imfa {

enum class PipelineMode {
  kBaseline,            // T encoder layers, then T decoder layers
  kIterativeEncoding,   // stacked stages, no sampling
  kImfa,                // stacked stages with sparse multi-scale sampling
};

std::string to_string(PipelineMode mode);
/// Accepts "baseline", "iter_enc" and "imfa"; anything else is a ConfigError.
PipelineMode parse_pipeline_mode(const std::string& name);

/// K = max(1, floor(N·r)). A 1e-9 slack absorbs representation error such as 0.29·100.
std::size_t promising_region_count(std::size_t queries, double ratio);

struct StageConfig {
  std::size_t num_stages = 3;
  std::size_t queries = 30;
  double sampling_ratio = 0.2;
  std::size_t keypoints = 8;
  /// Pyramid levels sampled, counted from the coarsest.
  std::size_t scales = 4;
  std::size_t heads = 4;
  std::size_t d = 64;
  std::size_t classes = 3;
  PipelineMode mode = PipelineMode::kImfa;
  /// Sampled tokens act as keys and values only and are not updated by the encoder.
  bool sampled_keys_only = false;
  /// Ablations. When off: keypoints are random in-box points, scale weights are
  /// uniform, and the sampled feature is only normalized.
  bool rep_keypoints = true;
  bool ada_scale = true;
  bool dynamic_ffn = true;

  std::size_t regions() const { return promising_region_count(queries, sampling_ratio); }
  bool sampling() const { return mode == PipelineMode::kImfa; }
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// Sampler weights shared by all stages. Absent members belong to disabled ablations.
struct SamplerParams {
  std::optional<LinearLayer> keypoint_hidden;  // d → d
  std::optional<LinearLayer> keypoint_out;     // d → 2M
  /// The M per-keypoint scale heads stacked column-wise: d → M·S.
  std::optional<LinearLayer> scale_logits;
  /// Generates both dynamic FFN matrices: d → 2·d·(d/4).
  std::optional<LinearLayer> psi;
  LayerNormLayer norm;
};

struct ModelParams {
  StageConfig config;
  BackboneParams backbone;
  ParamId query_embed;  // [N × d]
  ParamId ref_logits;   // [N × 4], stage-0 reference boxes before the sigmoid
  std::vector<EncoderLayerParams> encoders;
  std::vector<DecoderLayerParams> decoders;
  std::vector<HeadParams> heads;
  std::optional<SamplerParams> sampler;
};

template <typename Real>
ModelParams register_model(ParameterSet<Real>& params, Initializer& init, const StageConfig& config);

template <typename Real>
struct SampledTokenSet {
  Tensor<Real> features;       // F' [K·M × d]
  Tensor<Real> keypoints;      // [K·M × 2] normalized (x, y)
  Tensor<Real> scale_weights;  // α [K·M × S]
  Tensor<Real> region_boxes;   // owner boxes [K × 4] (cx, cy, w, h)
  std::vector<std::size_t> regions;      // K query indices
  std::vector<std::size_t> owner_query;  // K·M query indices
  std::vector<std::uint64_t> ids;        // K·M provenance ids

  std::size_t size() const { return owner_query.size(); }
};

template <typename Real>
struct StageState {
  Tensor<Real> image_tokens;  // [T_img × d], carried to the next stage
  Tensor<Real> image_pos;     // [T_img × d]
  QuerySet<Real> queries;     // decoder output and the reference boxes it used
  Predictions<Real> predictions;
  std::optional<SampledTokenSet<Real>> sampled;
  std::vector<std::uint64_t> encoder_token_ids;
  std::size_t encoder_tokens() const { return encoder_token_ids.size(); }
};

template <typename Real>
struct PipelineResult {
  std::vector<StageState<Real>> stages;
  const Predictions<Real>& final_predictions() const { return stages.back().predictions; }
};

/// The values a forward pass treats as constants: the detached reference boxes
/// and the promising-region picks of every stage. Replaying them from an earlier
/// pass holds those stop-gradients fixed, so the pass becomes the function whose
/// derivative the tape computes (as needed by finite-difference checks).
template <typename Real>
struct FrozenDecisions {
  std::vector<Tensor<Real>> reference_boxes;        // per stage; empty where the boxes are learned
  std::vector<std::vector<std::size_t>> regions;    // per stage; empty where nothing is sampled
};

/// Indices of the K most confident queries, confidence = max over classes of
/// sigmoid(logit); equal confidences keep the lower index first.
template <typename Real>
std::vector<std::size_t> select_promising(const Tensor<Real>& class_logits, std::size_t k);

/// Maps fractions u [K·M × 2] to in-box points x = x_min + u·w within each
/// region box clamped to the unit square. Row i·M + j belongs to region i.
template <typename Real>
Tensor<Real> keypoints_in_boxes(const Tensor<Real>& fractions, const Tensor<Real>& boxes, std::size_t m);

/// Keypoints from a 2-layer MLP over the region queries, squashed into the boxes.
template <typename Real>
Tensor<Real> predict_keypoints(const Tensor<Real>& region_queries, const Tensor<Real>& region_boxes,
                               ParamBinding<Real>& p, const SamplerParams& sampler, std::size_t m);

/// α = softmax over scales of the per-keypoint heads, [K·M × S].
template <typename Real>
Tensor<Real> scale_weights(const Tensor<Real>& region_queries, ParamBinding<Real>& p, const SamplerParams& sampler,
                           std::size_t m, std::size_t s);

/// Σ_s α[:, s] · bilinear_sample(levels[s], points).
template <typename Real>
Tensor<Real> sample_scale_adaptive(const Tensor<Real>& points, const Tensor<Real>& alpha,
                                   const std::vector<Tensor<Real>>& levels);

/// norm(F + W2 · relu(W1 · F)) with [W1 | W2] = ψ(Q_i) shared by the M rows of region i.
template <typename Real>
Tensor<Real> dynamic_ffn(const Tensor<Real>& features, const Tensor<Real>& region_queries, ParamBinding<Real>& p,
                         const SamplerParams& sampler, std::size_t d);

/// Builds the sampled tokens a stage aggregates from the previous stage's predictions.
/// `regions`, when given, replaces the top-K selection.
template <typename Real>
SampledTokenSet<Real> build_sampled_tokens(const StageState<Real>& prev, const FeaturePyramid<Real>& pyramid,
                                           ParamBinding<Real>& p, const ModelParams& model, std::size_t stage,
                                           std::uint64_t sample_seed,
                                           const std::vector<std::size_t>* regions = nullptr);

/// Image tokens and learned queries entering stage 0.
template <typename Real>
StageState<Real> initial_state(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p, const ModelParams& model);

template <typename Real>
StageState<Real> run_stage(const StageState<Real>& prev, const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                           const ModelParams& model, std::size_t stage, std::uint64_t sample_seed = 0,
                           const FrozenDecisions<Real>* frozen = nullptr);

/// Backbone and all stages; `sample_seed` only feeds the random-keypoint ablation.
template <typename Real>
PipelineResult<Real> run_pipeline(const Image& img, ParamBinding<Real>& p, const ModelParams& model,
                                  std::uint64_t sample_seed = 0, const FrozenDecisions<Real>* frozen = nullptr);
template <typename Real>
PipelineResult<Real> run_pipeline(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                                  const ModelParams& model, std::uint64_t sample_seed = 0,
                                  const FrozenDecisions<Real>* frozen = nullptr);

template <typename Real>
FrozenDecisions<Real> freeze(const PipelineResult<Real>& result);

/// Stacked encoder/decoder stages written out directly, without the sampler
/// plumbing. Serves as the reference for the iterative-encoding arm.
template <typename Real>
std::vector<Predictions<Real>> run_iterative_reference(const FeaturePyramid<Real>& pyramid, ParamBinding<Real>& p,
                                                       const ModelParams& model);

}  // namespace imfa
