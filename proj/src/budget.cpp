// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/budget.hpp"

#include <string>

#include "imfa/errors.hpp"
#include "imfa/stage.hpp"

namespace imfa {

void BudgetConfig::validate() const {
  auto check = [&](std::size_t s) {
    if (s == 0 || height % s != 0 || width % s != 0) {
      throw ConfigError("stride " + std::to_string(s) + " does not divide the " + std::to_string(height) + "x" +
                        std::to_string(width) + " image");
    }
  };
  check(single_stride);
  if (dense_strides.empty()) throw ConfigError("dense_strides must not be empty");
  for (auto s : dense_strides) check(s);
  if (d == 0 || queries == 0 || keypoints == 0) throw ConfigError("d, queries and keypoints must be positive");
  if (!(sampling_ratio > 0 && sampling_ratio <= 1)) throw ConfigError("sampling_ratio must lie in (0, 1]");
}

nlohmann::json BudgetReport::to_json() const {
  return {{"single_tokens", single_tokens},   {"dense_tokens", dense_tokens},
          {"sampled_tokens", sampled_tokens}, {"imfa_tokens", imfa_tokens},
          {"single_cost", single_cost},       {"dense_cost", dense_cost},
          {"imfa_cost", imfa_cost},           {"dense_token_ratio", dense_token_ratio},
          {"imfa_token_ratio", imfa_token_ratio}, {"dense_cost_ratio", dense_cost_ratio},
          {"imfa_cost_ratio", imfa_cost_ratio}};
}

BudgetReport compute_budget(const BudgetConfig& c) {
  c.validate();
  auto tokens = [&](std::size_t s) { return (c.height / s) * (c.width / s); };
  auto cost = [&](std::size_t n) { return static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(c.d); };
  BudgetReport r;
  r.single_tokens = tokens(c.single_stride);
  for (auto s : c.dense_strides) r.dense_tokens += tokens(s);
  r.sampled_tokens = promising_region_count(c.queries, c.sampling_ratio) * c.keypoints;
  r.imfa_tokens = r.single_tokens + r.sampled_tokens;
  r.single_cost = cost(r.single_tokens);
  r.dense_cost = cost(r.dense_tokens);
  r.imfa_cost = cost(r.imfa_tokens);
  const double single = static_cast<double>(r.single_tokens);
  r.dense_token_ratio = static_cast<double>(r.dense_tokens) / single;
  r.imfa_token_ratio = static_cast<double>(r.imfa_tokens) / single;
  r.dense_cost_ratio = r.dense_cost / r.single_cost;
  r.imfa_cost_ratio = r.imfa_cost / r.single_cost;
  return r;
}

}  // namespace imfa
