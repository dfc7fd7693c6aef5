// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "imfa/boxes.hpp"
#include "imfa/stage.hpp"

namespace imfa {

/// Dense row-major cost matrix, rows = predictions, columns = ground truth.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, ground truth), by prediction
  std::vector<std::size_t> unmatched;                      // prediction indices, ascending

  double total_cost(const CostMatrix& cost) const;
};

/// Minimum-cost assignment of min(rows, cols) pairs. Among optimal assignments
/// the lexicographically smallest pair list is returned. Throws NumericError on
/// non-finite costs.
MatchResult hungarian_match(const CostMatrix& cost);

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Ground truth of one image: corner boxes in normalized coordinates.
struct Target {
  std::vector<Box> boxes;
  std::vector<std::size_t> labels;

  std::size_t size() const { return boxes.size(); }
  /// DataError on degenerate boxes, labels ≥ classes, or mismatched lengths.
  void validate(std::size_t classes) const;
};

/// cls·(focal_pos − focal_neg at the target class) + l1·‖b − g‖₁ + giou·(1 − GIoU),
/// with boxes compared in (cx, cy, w, h).
template <typename Real>
CostMatrix match_cost(const Predictions<Real>& pred, const Target& target, const LossWeights& w = {});

template <typename Real>
struct LossTerms {
  Tensor<Real> total;
  // Unweighted, normalized components for logging.
  double cls = 0;
  double l1 = 0;
  double giou = 0;
};

/// Focal loss over all N×C logits (unmatched rows all-negative) plus L1 and
/// 1 − GIoU on matched boxes, each divided by max(1, #gt).
template <typename Real>
LossTerms<Real> stage_loss(const Predictions<Real>& pred, const Target& target, const MatchResult& match,
                           const LossWeights& w = {});

/// Independent matching and stage_loss for each stage, summed without weights.
template <typename Real>
LossTerms<Real> deep_supervision(const std::vector<Predictions<Real>>& stages, const Target& target,
                                 const LossWeights& w = {});
template <typename Real>
LossTerms<Real> deep_supervision(const PipelineResult<Real>& result, const Target& target, const LossWeights& w = {});

}  // namespace imfa
