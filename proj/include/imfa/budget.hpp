// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form token accounting. Attention cost is proxied by tokens²·d.

#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"

namespace imfa {

struct BudgetConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t single_stride = 32;
  std::vector<std::size_t> dense_strides{8, 16, 32};
  std::size_t queries = 30;
  double sampling_ratio = 0.2;
  std::size_t keypoints = 8;
  std::size_t d = 64;

  /// ConfigError unless every stride divides both extents.
  void validate() const;
};

struct BudgetReport {
  std::size_t single_tokens = 0;
  std::size_t dense_tokens = 0;
  std::size_t sampled_tokens = 0;  // K·M
  std::size_t imfa_tokens = 0;     // single + K·M
  double single_cost = 0;
  double dense_cost = 0;
  double imfa_cost = 0;
  double dense_token_ratio = 0;
  double imfa_token_ratio = 0;
  double dense_cost_ratio = 0;
  double imfa_cost_ratio = 0;

  nlohmann::json to_json() const;
};

BudgetReport compute_budget(const BudgetConfig& config);

}  // namespace imfa
