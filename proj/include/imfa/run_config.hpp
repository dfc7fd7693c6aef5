// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "imfa/stage.hpp"
#include "json.hpp"

namespace imfa {

struct OptimizerConfig {
  double lr_backbone = 1e-4;
  double lr_main = 1e-3;
  double weight_decay = 1e-4;
  std::size_t steps = 2000;
  /// Both learning rates drop tenfold from this step on.
  std::size_t lr_drop_step = 1600;
  std::size_t batch_size = 8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunConfig {
  StageConfig stage;
  OptimizerConfig optimizer;
  std::string dataset;
  std::uint64_t seed = 0;
  bool flip = true;  // random horizontal flips during training
  // Ablation arms; they override the corresponding stage fields.
  bool iter_enc_only = false;
  bool disable_rep_keypoints = false;
  bool disable_ada_scale = false;
  bool disable_dynamic_ffn = false;

  /// Stage configuration with the ablation flags applied.
  StageConfig effective_stage() const;
  /// ConfigError naming the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Starts from `base` and overrides the keys present; unknown keys are a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// Thread count from IMFA_THREADS (default 1). Recorded in outputs.
std::size_t configured_threads();

}  // namespace imfa
