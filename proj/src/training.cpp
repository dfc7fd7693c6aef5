// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "imfa/errors.hpp"
#include "imfa/matching.hpp"

namespace imfa {

AdamW::AdamW(const ParameterSet<float>& params, const OptimizerConfig& config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.entry(i).value.numel(), 0.0f);
    v_.emplace_back(params.entry(i).value.numel(), 0.0f);
  }
}

double AdamW::learning_rate(ParamGroup group, std::size_t step) const {
  const double base = group == ParamGroup::kBackbone ? config_.lr_backbone : config_.lr_main;
  return step >= config_.lr_drop_step ? 0.1 * base : base;
}

double AdamW::update(ParameterSet<float>& params, const std::vector<Buffer<float>>& grads) {
  double sq = 0;
  for (const auto& g : grads) {
    for (float x : g) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm at step " + std::to_string(t_));
  const double clip = config_.clip_norm > 0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(t_ + 1)), c2 = 1 - std::pow(b2, static_cast<double>(t_ + 1));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    const double lr = learning_rate(e.group, t_);
    Buffer<float> w = Buffer<float>(e.value.data().begin(), e.value.data().end());
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k] * clip;
      m[k] = static_cast<float>(b1 * m[k] + (1 - b1) * g);
      v[k] = static_cast<float>(b2 * v[k] + (1 - b2) * g * g);
      const double step = (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
      w[k] = static_cast<float>(w[k] - lr * (config_.weight_decay * w[k] + step));
    }
    params.set(i, Tensor<float>(e.value.shape(), std::move(w)));
  }
  ++t_;
  return norm;
}

nlohmann::json MetricRecord::to_json() const {
  return {{"step", step}, {"loss", loss}, {"cls", cls},   {"l1", l1},
          {"giou", giou}, {"lr", lr},     {"grad_norm", grad_norm}};
}

TrainResult train(const RunConfig& config, const Dataset& data, const StepCallback& on_step) {
  config.validate();
  if (data.empty()) throw DataError("training dataset is empty");
  const auto stage = config.effective_stage();
  for (const auto& s : data) {
    for (auto c : s.annotation.classes) {
      if (c >= stage.classes) {
        throw ConfigError("dataset label " + std::to_string(c) + " exceeds the configured " +
                          std::to_string(stage.classes) + " classes");
      }
    }
  }

  TrainResult out;
  Initializer init(config.seed);
  out.model = register_model(out.params, init, stage);
  AdamW opt(out.params, config.optimizer);
  std::mt19937_64 rng(derive_seed(config.seed, 0x7261696eull));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t batch = config.optimizer.batch_size;
  const float inv_batch = 1.0f / static_cast<float>(batch);

  for (std::size_t step = 0; step < config.optimizer.steps; ++step) {
    std::vector<Buffer<float>> grads;
    for (std::size_t i = 0; i < out.params.size(); ++i) grads.emplace_back(out.params.entry(i).value.numel(), 0.0f);
    MetricRecord rec;
    rec.step = step;
    rec.lr = opt.learning_rate(ParamGroup::kMain, step);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& base = data[order[cursor++]];
      const bool flip = config.flip && (rng() & 1u);
      const Sample sample = flip ? flip_horizontal(base) : base;

      Tape<float> tape;
      ParamBinding<float> p(out.params, &tape);
      const auto result = run_pipeline(sample.image, p, out.model, derive_seed(config.seed, step * batch + b));
      const auto loss = deep_supervision(result, sample.annotation.target());
      const double value = loss.total.item();
      if (!std::isfinite(value)) throw NumericError("non-finite loss at step " + std::to_string(step));
      const auto g = p.collect(tape.backward(loss.total));
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& src = g[i].data();
        for (std::size_t k = 0; k < src.size(); ++k) grads[i][k] += src[k] * inv_batch;
      }
      rec.loss += value / batch;
      rec.cls += loss.cls / batch;
      rec.l1 += loss.l1 / batch;
      rec.giou += loss.giou / batch;
    }
    rec.grad_norm = opt.update(out.params, grads);
    out.metrics.push_back(rec);
    if (on_step) on_step(rec);
  }
  return out;
}

double smoothed_loss(const std::vector<MetricRecord>& metrics, std::size_t end, std::size_t window) {
  end = std::min(end, metrics.size());
  const std::size_t begin = end > window ? end - window : 0;
  if (begin == end) return 0.0;
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += metrics[i].loss;
  return s / static_cast<double>(end - begin);
}

}  // namespace imfa
