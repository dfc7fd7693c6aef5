// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "imfa/run_config.hpp"
#include "imfa/synthetic.hpp"

namespace imfa {

/// Adam with decoupled weight decay, a tenfold step drop at lr_drop_step, and
/// optional global gradient-norm clipping.
class AdamW {
 public:
  AdamW(const ParameterSet<float>& params, const OptimizerConfig& config);

  /// Rate for a parameter group at 0-based step `step`.
  double learning_rate(ParamGroup group, std::size_t step) const;
  /// One update from per-parameter gradients; returns the gradient norm before clipping.
  double update(ParameterSet<float>& params, const std::vector<Buffer<float>>& grads);
  std::size_t steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<Buffer<float>> m_, v_;
  std::size_t t_ = 0;
};

struct MetricRecord {
  std::size_t step = 0;
  double loss = 0;
  double cls = 0;
  double l1 = 0;
  double giou = 0;
  double lr = 0;
  double grad_norm = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  ParameterSet<float> params;
  ModelParams model;
  std::vector<MetricRecord> metrics;
};

/// `on_step` sees every record as it is produced (metrics logging, progress).
using StepCallback = std::function<void(const MetricRecord&)>;

/// Seeded training; the same config and data give bit-identical parameters and
/// metrics. ConfigError when a label exceeds the configured class count,
/// DataError on an empty dataset, NumericError on a non-finite loss.
TrainResult train(const RunConfig& config, const Dataset& data, const StepCallback& on_step = {});

/// Mean of the last `window` losses ending at `end` (exclusive).
double smoothed_loss(const std::vector<MetricRecord>& metrics, std::size_t end, std::size_t window);

}  // namespace imfa
