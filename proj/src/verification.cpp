// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/verification.hpp"

#include <algorithm>
#include <random>

#include "imfa/matching.hpp"
#include "imfa/ops.hpp"
#include "imfa/stage.hpp"

namespace imfa {

namespace {

Tensor<double> uniform_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Buffer<double> v(shape_numel(shape));
  for (auto& x : v) x = lo + (hi - lo) * unit_double(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Contracts an output with fixed pseudo-random weights so every entry matters.
Tensor<double> weigh(const Tensor<double>& y) {
  std::mt19937_64 rng(y.numel());
  return sum(mul(y, uniform_tensor(rng, y.shape())));
}

}  // namespace

std::vector<NamedCheck> op_gradient_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-4, .abs_floor = 1e-6};
  std::vector<NamedCheck> out;
  auto check = [&](const char* name, const ScalarFn& f, const Tensor<double>& x) {
    out.push_back({name, check_gradient(f, x, opts)});
  };
  using T = Tensor<double>;
  const auto a = uniform_tensor(rng, {4, 6});
  const auto b = uniform_tensor(rng, {4, 6});
  const auto pos = uniform_tensor(rng, {4, 6}, 0.5, 2.0);
  const auto mix = uniform_tensor(rng, {6, 4});
  const T bias({4}, {1, 2, 3, 4});

  check("add", [&](const T& x) { return weigh(add(x, b)); }, a);
  check("sub", [&](const T& x) { return weigh(sub(b, x)); }, a);
  check("mul", [&](const T& x) { return weigh(mul(x, b)); }, a);
  check("div numerator", [&](const T& x) { return weigh(div(x, pos)); }, a);
  check("div denominator", [&](const T& x) { return weigh(div(a, x)); }, pos);
  check("minimum", [&](const T& x) { return weigh(minimum(x, b)); }, a);
  check("maximum", [&](const T& x) { return weigh(maximum(b, x)); }, a);
  check("scale", [&](const T& x) { return weigh(scale(x, 1.7)); }, a);
  check("add_scalar", [&](const T& x) { return weigh(mul(add_scalar(x, 0.3), x)); }, a);
  check("relu", [&](const T& x) { return weigh(relu(x)); }, a);
  check("sigmoid", [&](const T& x) { return weigh(sigmoid(x)); }, a);
  check("exp", [&](const T& x) { return weigh(exp(x)); }, a);
  check("log", [&](const T& x) { return weigh(log(x)); }, pos);
  check("abs", [&](const T& x) { return weigh(abs(x)); }, a);
  check("inverse_sigmoid", [&](const T& x) { return weigh(inverse_sigmoid(x)); }, uniform_tensor(rng, {4, 6}, 0.05, 0.95));
  check("add_row", [&](const T& x) { return weigh(add_row(a, x)); }, uniform_tensor(rng, {6}));
  const auto row_w = uniform_tensor(rng, {4});
  check("mul_rows x", [&](const T& x) { return weigh(mul_rows(x, row_w)); }, a);
  check("mul_rows w", [&](const T& x) { return weigh(mul_rows(a, x)); }, uniform_tensor(rng, {4}));
  check("mean", [&](const T& x) { return mean(mul(x, x)); }, a);
  check("matmul left", [&](const T& x) { return weigh(matmul(x, mix)); }, a);
  check("matmul right", [&](const T& x) { return weigh(matmul(a, x)); }, mix);
  check("linear x", [&](const T& x) { return weigh(linear(x, mix, bias)); }, a);
  check("linear w", [&](const T& x) { return weigh(linear(a, x, bias)); }, mix);
  check("linear b", [&](const T& x) { return weigh(linear(a, mix, x)); }, uniform_tensor(rng, {4}));
  check("slice_rows", [&](const T& x) { return weigh(slice_rows(x, 1, 3)); }, a);
  check("concat_rows", [&](const T& x) { return weigh(concat_rows<double>({b, x, x})); }, a);
  const std::vector<std::size_t> rows{3, 0, 3};
  check("gather_rows", [&](const T& x) { return weigh(gather_rows(x, rows)); }, a);
  check("slice_cols", [&](const T& x) { return weigh(slice_cols(x, 2, 5)); }, a);
  check("concat_cols", [&](const T& x) { return weigh(concat_cols<double>({x, b, x})); }, a);
  check("softmax axis 0", [&](const T& x) { return weigh(softmax(x, 0)); }, a);
  check("softmax axis 1", [&](const T& x) { return weigh(softmax(x, 1)); }, a);
  const auto gain = uniform_tensor(rng, {6});
  const auto shift = uniform_tensor(rng, {6});
  check("layer_norm x", [&](const T& x) { return weigh(layer_norm(x, gain, shift, 1e-5)); }, a);
  check("layer_norm gain", [&](const T& x) { return weigh(layer_norm(a, x, shift, 1e-5)); }, gain);
  check("layer_norm bias", [&](const T& x) { return weigh(layer_norm(a, gain, x, 1e-5)); }, shift);
  const auto k = uniform_tensor(rng, {5, 6});
  const auto v = uniform_tensor(rng, {5, 6});
  check("attention q", [&](const T& x) { return weigh(attention(x, k, v, 2)); }, a);
  check("attention k", [&](const T& x) { return weigh(attention(a, x, v, 3)); }, k);
  check("attention v", [&](const T& x) { return weigh(attention(a, k, x, 2)); }, v);
  const auto grid = uniform_tensor(rng, {4, 5, 3});
  const auto pts = uniform_tensor(rng, {7, 2}, 0.05, 0.95);
  check("bilinear grid", [&](const T& x) { return weigh(bilinear_sample(x, pts)); }, grid);
  check("bilinear points", [&](const T& x) { return weigh(bilinear_sample(grid, x)); }, pts);
  check("avg_pool2x2", [&](const T& x) { return weigh(avg_pool2x2(x)); }, uniform_tensor(rng, {4, 6, 2}));
  const auto dyn = uniform_tensor(rng, {2, 12});
  const auto feats = uniform_tensor(rng, {6, 4});
  check("grouped_matvec weights", [&](const T& x) { return weigh(grouped_matvec(x, feats, 3, 4)); }, dyn);
  check("grouped_matvec input", [&](const T& x) { return weigh(grouped_matvec(dyn, x, 3, 4)); }, feats);
  check("sine_embed_points", [&](const T& x) { return weigh(sine_embed_points(x, 16)); }, pts);
  const T targets({2, 3}, {1, 0, 0, 0, 0, 1});
  check("sigmoid_focal_loss", [&](const T& x) { return sigmoid_focal_loss(x, targets, 0.25, 2.0); },
        uniform_tensor(rng, {2, 3}, -3, 3));

  // Set loss with the assignment held fixed.
  Target target;
  target.boxes = {from_cxcywh(0.3, 0.4, 0.2, 0.3), from_cxcywh(0.7, 0.6, 0.3, 0.2)};
  target.labels = {0, 2};
  Buffer<double> boxes;
  for (int i = 0; i < 5; ++i) {
    boxes.insert(boxes.end(), {0.2 + 0.6 * unit_double(rng), 0.2 + 0.6 * unit_double(rng),
                               0.1 + 0.3 * unit_double(rng), 0.1 + 0.3 * unit_double(rng)});
  }
  const Predictions<double> pred{uniform_tensor(rng, {5, 3}, -2, 1), T({5, 4}, std::move(boxes))};
  const auto match = hungarian_match(match_cost(pred, target));
  check("stage_loss logits",
        [&](const T& x) { return stage_loss(Predictions<double>{x, pred.boxes}, target, match).total; },
        pred.class_logits);
  check("stage_loss boxes",
        [&](const T& x) { return stage_loss(Predictions<double>{pred.class_logits, x}, target, match).total; },
        pred.boxes);
  return out;
}

std::vector<NamedCheck> pipeline_gradient_checks(std::uint64_t seed, std::size_t max_coords) {
  StageConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.queries = 10;
  cfg.keypoints = 3;
  cfg.num_stages = 3;
  ParameterSet<double> params;
  Initializer init(seed);
  const auto model = register_model(params, init, cfg);
  std::mt19937_64 rng(seed + 1);
  // Larger-than-default weights keep activations away from saturation-free regimes.
  for (std::size_t i = 0; i < params.size(); ++i) params.set(i, uniform_tensor(rng, params.entry(i).value.shape(), -0.6, 0.6));

  Image img = make_image(32, 32);
  for (auto& v : img.data) v = static_cast<float>(unit_double(rng));
  Target target;
  target.boxes = {from_cxcywh(0.3, 0.35, 0.3, 0.4), from_cxcywh(0.7, 0.65, 0.25, 0.3)};
  target.labels = {1, 2};

  FrozenDecisions<double> frozen;
  std::vector<MatchResult> matches;
  {
    ParamBinding<double> p(params, nullptr);
    const auto base = run_pipeline(img, p, model);
    frozen = freeze(base);
    for (const auto& st : base.stages) matches.push_back(hungarian_match(match_cost(st.predictions, target)));
  }
  auto loss = [&](ParamBinding<double>& p) {
    const auto out = run_pipeline(img, p, model, 0, &frozen);
    Tensor<double> total;
    for (std::size_t t = 0; t < out.stages.size(); ++t) {
      const auto term = stage_loss(out.stages[t].predictions, target, matches[t]).total;
      total = t == 0 ? term : add(total, term);
    }
    return total;
  };
  const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-3, .abs_floor = 1e-6, .max_coords = max_coords};
  std::vector<NamedCheck> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params.entry(i).name, check_parameter_gradient(params, ParamId{i}, loss, opts)});
  }
  return out;
}

bool all_passed(const std::vector<NamedCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const NamedCheck& c) { return c.report.passed(); });
}

}  // namespace imfa
