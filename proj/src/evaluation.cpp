// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "imfa/errors.hpp"

namespace imfa {

namespace {

struct Ranked {
  double score;
  std::size_t image;
  std::size_t index;
};

// Detections of one class over all images, by descending score; ties keep
// image and then detection order.
std::vector<Ranked> ranked(const std::vector<std::vector<Detection>>& dets, std::size_t cls) {
  std::vector<Ranked> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t k = 0; k < dets[i].size(); ++k) {
      if (dets[i][k].label == cls) out.push_back({dets[i][k].score, i, k});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  return out;
}

bool in_band(const Box& b, const ScaleBand* band) { return band == nullptr || scale_band(b.area()) == *band; }

double class_ap(const std::vector<std::vector<Detection>>& dets, const std::vector<Target>& truth, std::size_t cls,
                double thr, const ScaleBand* band, bool& has_truth) {
  // Ground truth outside the band is "ignored": matching one neither helps nor
  // hurts, and unmatched detections outside the band are dropped too.
  std::size_t positives = 0;
  std::vector<std::vector<char>> taken(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    taken[i].assign(truth[i].size(), 0);
    for (std::size_t j = 0; j < truth[i].size(); ++j) {
      if (truth[i].labels[j] == cls && in_band(truth[i].boxes[j], band)) ++positives;
    }
  }
  has_truth = positives > 0;
  if (!has_truth) return 0.0;

  std::vector<char> is_tp;
  for (const auto& r : ranked(dets, cls)) {
    const auto& det = dets[r.image][r.index];
    const auto& gt = truth[r.image];
    // Best unmatched in-band match first; fall back to ignored ground truth.
    auto best_match = [&](bool ignored) {
      std::ptrdiff_t best = -1;
      double best_iou = thr;
      for (std::size_t j = 0; j < gt.size(); ++j) {
        if (gt.labels[j] != cls || taken[r.image][j] || in_band(gt.boxes[j], band) == ignored) continue;
        const double o = iou(det.box, gt.boxes[j]);
        if (o >= thr && (best < 0 || o > best_iou)) {
          best = static_cast<std::ptrdiff_t>(j);
          best_iou = o;
        }
      }
      return best;
    };
    if (const auto j = best_match(false); j >= 0) {
      taken[r.image][static_cast<std::size_t>(j)] = 1;
      is_tp.push_back(1);
    } else if (const auto ji = best_match(true); ji >= 0) {
      taken[r.image][static_cast<std::size_t>(ji)] = 1;
    } else if (in_band(det.box, band)) {
      is_tp.push_back(0);
    }
  }

  // Precision envelope from the right; AP = Σ env_k over true positives / positives.
  std::vector<double> precision(is_tp.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < is_tp.size(); ++k) {
    tp += static_cast<std::size_t>(is_tp[k]);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double env = 0, area = 0;
  for (std::size_t k = is_tp.size(); k-- > 0;) {
    env = std::max(env, precision[k]);
    if (is_tp[k]) area += env;
  }
  return area / static_cast<double>(positives);
}

}  // namespace

nlohmann::json ApReport::to_json() const {
  return {{"ap", ap},       {"ap50", ap50},           {"ap75", ap75},      {"ap_small", ap_small},
          {"ap_medium", ap_medium}, {"ap_large", ap_large}, {"images", images}, {"detections", detections},
          {"ground_truth", ground_truth}};
}

template <typename Real>
std::vector<Detection> detections_from(const Predictions<Real>& pred) {
  const std::size_t n = pred.class_logits.dim(0), c = pred.class_logits.dim(1);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (pred.class_logits[i * c + k] > pred.class_logits[i * c + best]) best = k;
    }
    const double logit = static_cast<double>(pred.class_logits[i * c + best]);
    out.push_back({box_row(pred.boxes, i), best, 1.0 / (1.0 + std::exp(-logit))});
  }
  return out;
}

double average_precision_at(const std::vector<std::vector<Detection>>& detections, const std::vector<Target>& truth,
                            std::size_t classes, double iou_threshold, const ScaleBand* band) {
  if (detections.size() != truth.size()) throw ContractError("average_precision: image counts differ");
  for (const auto& t : truth) t.validate(classes);
  double sum = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    bool has_truth = false;
    const double ap = class_ap(detections, truth, c, iou_threshold, band, has_truth);
    if (has_truth) {
      sum += ap;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

ApReport average_precision(const std::vector<std::vector<Detection>>& detections, const std::vector<Target>& truth,
                           std::size_t classes) {
  try {
    for (const auto& t : truth) t.validate(classes);
  } catch (const DataError& e) {
    throw ConfigError(std::string("evaluation: ") + e.what());
  }
  auto mean_over_thresholds = [&](const ScaleBand* band) {
    double s = 0;
    for (int k = 0; k < 10; ++k) s += average_precision_at(detections, truth, classes, 0.5 + 0.05 * k, band);
    return s / 10.0;
  };
  ApReport r;
  r.ap = mean_over_thresholds(nullptr);
  r.ap50 = average_precision_at(detections, truth, classes, 0.5, nullptr);
  r.ap75 = average_precision_at(detections, truth, classes, 0.75, nullptr);
  const ScaleBand s = ScaleBand::kSmall, m = ScaleBand::kMedium, l = ScaleBand::kLarge;
  r.ap_small = mean_over_thresholds(&s);
  r.ap_medium = mean_over_thresholds(&m);
  r.ap_large = mean_over_thresholds(&l);
  r.images = truth.size();
  for (const auto& d : detections) r.detections += d.size();
  for (const auto& t : truth) r.ground_truth += t.size();
  return r;
}

ApReport evaluate(const ParameterSet<float>& params, const ModelParams& model, const Dataset& data,
                  std::size_t threads) {
  std::vector<Target> truth;
  for (const auto& s : data) {
    for (auto c : s.annotation.classes) {
      if (c >= model.config.classes) {
        throw ConfigError("dataset label " + std::to_string(c) + " but the checkpoint has " +
                          std::to_string(model.config.classes) + " classes");
      }
    }
    truth.push_back(s.annotation.target());
  }
  std::vector<std::vector<Detection>> dets(data.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < data.size();) {
      try {
        ParamBinding<float> p(params, nullptr);
        dets[i] = detections_from(run_pipeline(data[i].image, p, model).final_predictions());
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, threads); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return average_precision(dets, truth, model.config.classes);
}

ApReport evaluate(const Checkpoint& checkpoint, const Dataset& data, std::size_t threads) {
  return evaluate(checkpoint.params, checkpoint.model, data, threads);
}

template std::vector<Detection> detections_from<float>(const Predictions<float>&);
template std::vector<Detection> detections_from<double>(const Predictions<double>&);

}  // namespace imfa
