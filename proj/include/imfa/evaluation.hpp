// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// COCO-style average precision at desk scale: AP averaged over IoU thresholds
// 0.50:0.05:0.95 and over classes with ground truth, with greedy
// highest-confidence-first matching and no NMS. Precision is integrated exactly
// under its monotone envelope (all-point interpolation).

#pragma once

#include <vector>

#include "imfa/checkpoint.hpp"
#include "imfa/matching.hpp"
#include "imfa/synthetic.hpp"

namespace imfa {

struct Detection {
  Box box;
  std::size_t label = 0;
  double score = 0;
};

struct ApReport {
  double ap = 0;
  double ap50 = 0;
  double ap75 = 0;
  double ap_small = 0;
  double ap_medium = 0;
  double ap_large = 0;
  std::size_t images = 0;
  std::size_t detections = 0;
  std::size_t ground_truth = 0;

  nlohmann::json to_json() const;
};

/// One detection per query: the highest-scoring class with score sigmoid(logit).
template <typename Real>
std::vector<Detection> detections_from(const Predictions<Real>& pred);

/// `detections[i]` and `truth[i]` belong to image i. Ground-truth labels must be
/// below `classes` (ConfigError otherwise).
ApReport average_precision(const std::vector<std::vector<Detection>>& detections, const std::vector<Target>& truth,
                           std::size_t classes);

/// AP at one IoU threshold for one area band (nullptr for all areas).
double average_precision_at(const std::vector<std::vector<Detection>>& detections, const std::vector<Target>& truth,
                            std::size_t classes, double iou_threshold, const ScaleBand* band);

/// Runs the model over the dataset on `threads` workers (results do not depend
/// on the thread count) and scores the final-stage predictions.
ApReport evaluate(const Checkpoint& checkpoint, const Dataset& data, std::size_t threads = 1);
ApReport evaluate(const ParameterSet<float>& params, const ModelParams& model, const Dataset& data,
                  std::size_t threads = 1);

}  // namespace imfa
