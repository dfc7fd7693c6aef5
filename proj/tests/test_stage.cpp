// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "imfa/gradcheck.hpp"
#include "imfa/stage.hpp"
#include "test_util.hpp"

using namespace imfa;
using imfa::testing::max_abs_diff;
using imfa::testing::random_tensor;
using imfa::testing::randomize;

namespace {

Image noise_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img = make_image(h, w);
  for (auto& v : img.data) v = u(rng);
  return img;
}

StageConfig small_config(PipelineMode mode) {
  StageConfig c;
  c.mode = mode;
  c.d = 16;
  c.heads = 2;
  c.queries = 10;
  c.sampling_ratio = 0.2;
  c.keypoints = 3;
  c.num_stages = 3;
  return c;
}

struct Model {
  ParameterSet<double> params;
  ModelParams model;
  explicit Model(const StageConfig& cfg, std::uint64_t seed = 1) {
    Initializer init(seed);
    model = register_model(params, init, cfg);
  }
};

Tensor<double> random_boxes(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> c(lo, hi), s(0.02, 0.6);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), {c(rng), c(rng), s(rng), s(rng)});
  return Tensor<double>({n, 4}, v);
}

void require_inside(const Tensor<double>& pts, const Tensor<double>& boxes, std::size_t m) {
  for (std::size_t r = 0; r < pts.dim(0); ++r) {
    const std::size_t b = r / m;
    for (std::size_t a = 0; a < 2; ++a) {
      const double lo = std::clamp(boxes[b * 4 + a] - 0.5 * boxes[b * 4 + 2 + a], 0.0, 1.0);
      const double hi = std::clamp(boxes[b * 4 + a] + 0.5 * boxes[b * 4 + 2 + a], 0.0, 1.0);
      REQUIRE(pts[r * 2 + a] >= lo);
      REQUIRE(pts[r * 2 + a] <= hi);
    }
  }
}

}  // namespace

TEST_CASE("promising region count") {
  CHECK(promising_region_count(300, 0.2) == 60);
  CHECK(promising_region_count(30, 0.2) == 6);
  CHECK(promising_region_count(100, 0.29) == 29);
  CHECK(promising_region_count(3, 0.1) == 1);
  CHECK(promising_region_count(10, 1.0) == 10);
  StageConfig c;
  c.sampling_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.sampling_ratio = 0.2;
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("select_promising") {
  SUBCASE("equal confidences give the first K indices") {
    const auto idx = select_promising(Tensor<double>::full({12, 3}, 0.3), 5);
    CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("matches a full sort") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng() % 40, c = 1 + rng() % 4, k = 1 + rng() % n;
      // Coarse values force many ties.
      std::vector<double> v(n * c);
      for (auto& x : v) x = static_cast<double>(static_cast<int>(rng() % 9) - 4) * 0.5;
      const Tensor<double> logits({n, c}, v);
      std::vector<std::pair<double, std::size_t>> keyed;
      for (std::size_t i = 0; i < n; ++i) {
        double best = -1e300;
        for (std::size_t j = 0; j < c; ++j) best = std::max(best, v[i * c + j]);
        keyed.push_back({-best, i});
      }
      std::sort(keyed.begin(), keyed.end());
      std::vector<std::size_t> expect;
      for (std::size_t i = 0; i < k; ++i) expect.push_back(keyed[i].second);
      REQUIRE(select_promising(logits, k) == expect);
    }
  }
  SUBCASE("K above N is a config error") {
    CHECK_THROWS_AS(select_promising(Tensor<double>::zeros({4, 2}), 5), ConfigError);
  }
}

TEST_CASE("keypoints") {
  Model m(small_config(PipelineMode::kImfa));
  const auto& sampler = *m.model.sampler;
  std::mt19937_64 rng(9);

  SUBCASE("zero MLP output puts every keypoint at the box centre") {
    m.params.set(sampler.keypoint_out->weight, Tensor<double>::zeros({16, 6}));
    ParamBinding<double> p(m.params, nullptr);
    const auto boxes = random_boxes(rng, 4, 0.4, 0.6);
    std::vector<double> small;
    for (std::size_t i = 0; i < 4; ++i) small.insert(small.end(), {boxes[i * 4], boxes[i * 4 + 1], 0.2, 0.3});
    const Tensor<double> inner({4, 4}, small);
    const auto pts = predict_keypoints(random_tensor(rng, {4, 16}), inner, p, sampler, 3);
    for (std::size_t r = 0; r < 12; ++r) {
      CHECK(std::abs(pts[r * 2] - inner[(r / 3) * 4]) < 1e-15);
      CHECK(std::abs(pts[r * 2 + 1] - inner[(r / 3) * 4 + 1]) < 1e-15);
    }
  }
  SUBCASE("keypoints stay inside their clamped boxes") {
    for (int trial = 0; trial < 10000; ++trial) {
      ParamBinding<double> p(m.params, nullptr);
      const auto boxes = random_boxes(rng, 2, -0.1, 1.1);
      const auto pts = predict_keypoints(random_tensor(rng, {2, 16}, -4, 4), boxes, p, sampler, 3);
      require_inside(pts, boxes, 3);
    }
  }
  SUBCASE("default keypoint count") { CHECK(StageConfig{}.keypoints == 8); }
}

TEST_CASE("sample_scale_adaptive") {
  std::mt19937_64 rng(13);
  std::vector<Tensor<double>> levels;
  for (std::size_t side : {16u, 8u, 4u, 2u}) levels.push_back(random_tensor(rng, {side, side, 6}));
  const auto pts = random_tensor(rng, {7, 2}, 0, 1);

  SUBCASE("saturated logits select one level") {
    for (std::size_t s = 0; s < 4; ++s) {
      std::vector<double> logits(7 * 4, -800.0);
      for (std::size_t r = 0; r < 7; ++r) logits[r * 4 + s] = 800.0;
      const auto alpha = softmax(Tensor<double>({7, 4}, logits), 1);
      const auto f = sample_scale_adaptive(pts, alpha, levels);
      CHECK(max_abs_diff(f, bilinear_sample(levels[s], pts)) < 1e-6);
    }
  }
  SUBCASE("uniform weights average the levels") {
    const auto f = sample_scale_adaptive(pts, Tensor<double>::full({7, 4}, 0.25), levels);
    auto mean = bilinear_sample(levels[0], pts);
    for (std::size_t s = 1; s < 4; ++s) mean = add(mean, bilinear_sample(levels[s], pts));
    CHECK(max_abs_diff(f, scale(mean, 0.25)) < 1e-14);
  }
  SUBCASE("result lies in the per-coordinate hull of the level samples") {
    for (int trial = 0; trial < 10000; ++trial) {
      const auto p1 = random_tensor(rng, {1, 2}, -0.1, 1.1);
      const auto alpha = softmax(random_tensor(rng, {1, 4}, -6, 6), 1);
      const auto f = sample_scale_adaptive(p1, alpha, levels);
      for (std::size_t c = 0; c < 6; ++c) {
        double lo = 1e300, hi = -1e300;
        for (const auto& l : levels) {
          const double v = bilinear_sample(l, p1)[c];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        REQUIRE(f[c] >= lo - 1e-15);
        REQUIRE(f[c] <= hi + 1e-15);
      }
    }
  }
}

TEST_CASE("scale weights are distributions") {
  Model m(small_config(PipelineMode::kImfa));
  randomize(m.params, *std::make_unique<std::mt19937_64>(3), -2, 2);
  std::mt19937_64 rng(4);
  ParamBinding<double> p(m.params, nullptr);
  const auto alpha = scale_weights(random_tensor(rng, {5, 16}, -3, 3), p, *m.model.sampler, 3, 4);
  REQUIRE(alpha.shape() == Shape{15, 4});
  for (std::size_t r = 0; r < 15; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(alpha[r * 4 + c] >= 0.0);
      s += alpha[r * 4 + c];
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("dynamic_ffn") {
  Model m(small_config(PipelineMode::kImfa));
  const auto& sampler = *m.model.sampler;
  std::mt19937_64 rng(17);
  randomize(m.params, rng);
  const auto feats = random_tensor(rng, {6, 16});

  SUBCASE("zero generator leaves only the normalization") {
    m.params.set(sampler.psi->weight, Tensor<double>::zeros(m.params.value(sampler.psi->weight).shape()));
    m.params.set(sampler.psi->bias, Tensor<double>::zeros(m.params.value(sampler.psi->bias).shape()));
    ParamBinding<double> p(m.params, nullptr);
    const auto out = dynamic_ffn(feats, random_tensor(rng, {2, 16}), p, sampler, 16);
    CHECK(out.values() == sampler.norm(p, feats).values());
  }
  SUBCASE("identical queries transform identically") {
    ParamBinding<double> p(m.params, nullptr);
    const auto q = random_tensor(rng, {1, 16});
    const auto f = random_tensor(rng, {3, 16});
    const auto out = dynamic_ffn(concat_rows<double>({f, f}), concat_rows<double>({q, q}), p, sampler, 16);
    CHECK(slice_rows(out, 0, 3).values() == slice_rows(out, 3, 6).values());
  }
  SUBCASE("gradient reaches the queries") {
    const auto w = random_tensor(rng, {6, 16});
    const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-4, .abs_floor = 1e-6};
    auto r = check_gradient(
        [&](const Tensor<double>& q) {
          ParamBinding<double> p(m.params, nullptr);
          return sum(mul(dynamic_ffn(feats, q, p, sampler, 16), w));
        },
        random_tensor(rng, {2, 16}), opts);
    CHECK_MESSAGE(r.passed(), describe(r));
    CHECK(r.checked == 32);
  }
}

TEST_CASE("stage token accounting") {
  StageConfig cfg;  // d=64, N=30, r=0.2, M=8, T=3
  Model m(cfg, 2);
  ParamBinding<double> p(m.params, nullptr);
  const auto out = run_pipeline(noise_image(1, 256, 256), p, m.model);
  REQUIRE(out.stages.size() == 3);
  CHECK(out.stages[0].encoder_tokens() == 64);
  CHECK(out.stages[1].encoder_tokens() == 112);
  CHECK(out.stages[2].encoder_tokens() == 112);
  CHECK(!out.stages[0].sampled);
  for (const auto& st : out.stages) {
    CHECK(st.predictions.class_logits.shape() == Shape{30, 3});
    CHECK(st.predictions.boxes.shape() == Shape{30, 4});
    CHECK(st.image_tokens.shape() == Shape{64, 64});
  }
  CHECK(out.stages[1].sampled->size() == 48);
  CHECK(out.stages[1].sampled->scale_weights.shape() == Shape{48, 4});
}

TEST_CASE("sampled tokens do not outlive their stage") {
  Model m(small_config(PipelineMode::kImfa), 5);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    randomize(m.params, rng, -1, 1);
    ParamBinding<double> p(m.params, nullptr);
    const auto out = run_pipeline(noise_image(seed, 64, 32), p, m.model);
    for (std::size_t t = 1; t < out.stages.size(); ++t) {
      const auto& s = *out.stages[t].sampled;
      REQUIRE(out.stages[t].encoder_tokens() == 2 + 2 * 3);
      require_inside(s.keypoints, s.region_boxes, 3);
      for (std::size_t r = 0; r < s.size(); ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 4; ++c) total += s.scale_weights[r * 4 + c];
        REQUIRE(std::abs(total - 1.0) < 1e-6);
        REQUIRE(s.owner_query[r] == s.regions[r / 3]);
      }
      if (t + 1 < out.stages.size()) {
        const auto& next = out.stages[t + 1].encoder_token_ids;
        const std::set<std::uint64_t> carried(next.begin(), next.end());
        for (auto id : s.ids) REQUIRE(carried.count(id) == 0);
      }
    }
  }
}

TEST_CASE("iterative encoding arm matches the reference path bit for bit") {
  std::mt19937_64 rng(21);
  SUBCASE("dedicated iter_enc model") {
    Model m(small_config(PipelineMode::kIterativeEncoding), 7);
    randomize(m.params, rng);
    ParamBinding<double> p(m.params, nullptr);
    const auto pyr = run_backbone(noise_image(3, 64, 64), p, m.model.backbone);
    const auto got = run_pipeline(pyr, p, m.model);
    const auto ref = run_iterative_reference(pyr, p, m.model);
    REQUIRE(got.stages.size() == ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) {
      CHECK(got.stages[t].predictions.class_logits.values() == ref[t].class_logits.values());
      CHECK(got.stages[t].predictions.boxes.values() == ref[t].boxes.values());
      CHECK(got.stages[t].encoder_tokens() == 4);
    }
  }
  SUBCASE("full model with sampling switched off, in single precision") {
    ParameterSet<float> params;
    Initializer init(8);
    auto model = register_model(params, init, small_config(PipelineMode::kImfa));
    model.config.mode = PipelineMode::kIterativeEncoding;
    ParamBinding<float> p(params, nullptr);
    const auto pyr = run_backbone(noise_image(4, 64, 96), p, model.backbone);
    const auto got = run_pipeline(pyr, p, model);
    const auto ref = run_iterative_reference(pyr, p, model);
    for (std::size_t t = 0; t < ref.size(); ++t) {
      CHECK(got.stages[t].predictions.class_logits.values() == ref[t].class_logits.values());
      CHECK(got.stages[t].predictions.boxes.values() == ref[t].boxes.values());
    }
  }
}

TEST_CASE("pipeline arms and options") {
  SUBCASE("baseline encodes image tokens only") {
    Model m(small_config(PipelineMode::kBaseline));
    ParamBinding<double> p(m.params, nullptr);
    const auto out = run_pipeline(noise_image(1, 64, 64), p, m.model);
    REQUIRE(out.stages.size() == 3);
    for (const auto& st : out.stages) CHECK(st.encoder_tokens() == 4);
    CHECK(!m.model.sampler);
  }
  SUBCASE("sampled tokens as keys only") {
    auto cfg = small_config(PipelineMode::kImfa);
    cfg.sampled_keys_only = true;
    Model m(cfg);
    ParamBinding<double> p(m.params, nullptr);
    const auto out = run_pipeline(noise_image(1, 64, 64), p, m.model);
    CHECK(out.stages[1].encoder_tokens() == 4 + 6);
    CHECK(out.stages[1].image_tokens.shape() == Shape{4, 16});
  }
  SUBCASE("ablations drop their parameters") {
    auto cfg = small_config(PipelineMode::kImfa);
    cfg.rep_keypoints = false;
    cfg.ada_scale = false;
    cfg.dynamic_ffn = false;
    Model m(cfg);
    CHECK(!m.model.sampler->keypoint_out);
    CHECK(!m.model.sampler->scale_logits);
    CHECK(!m.model.sampler->psi);
    ParamBinding<double> p(m.params, nullptr);
    const auto a = run_pipeline(noise_image(1, 64, 64), p, m.model, 11);
    const auto b = run_pipeline(noise_image(1, 64, 64), p, m.model, 11);
    const auto c = run_pipeline(noise_image(1, 64, 64), p, m.model, 12);
    const auto& s = *a.stages[2].sampled;
    require_inside(s.keypoints, s.region_boxes, 3);
    for (auto v : s.scale_weights.data()) CHECK(v == 0.25);
    CHECK(s.keypoints.values() == b.stages[2].sampled->keypoints.values());
    CHECK(s.keypoints.values() != c.stages[2].sampled->keypoints.values());
  }
}

TEST_CASE("pipeline is deterministic") {
  ParameterSet<float> p1, p2;
  Initializer i1(99), i2(99);
  const auto m1 = register_model(p1, i1, StageConfig{});
  const auto m2 = register_model(p2, i2, StageConfig{});
  ParamBinding<float> b1(p1, nullptr), b2(p2, nullptr);
  const auto a = run_pipeline(noise_image(5, 128, 128), b1, m1);
  const auto b = run_pipeline(noise_image(5, 128, 128), b2, m2);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(a.stages[t].predictions.class_logits.values() == b.stages[t].predictions.class_logits.values());
    CHECK(a.stages[t].predictions.boxes.values() == b.stages[t].predictions.boxes.values());
  }
}

TEST_CASE("pipeline gradients") {
  auto cfg = small_config(PipelineMode::kImfa);
  Model m(cfg, 31);
  std::mt19937_64 rng(32);
  randomize(m.params, rng, -0.6, 0.6);
  const auto img = noise_image(6, 32, 32);
  std::vector<Tensor<double>> wl, wb;
  for (std::size_t t = 0; t < 3; ++t) {
    wl.push_back(random_tensor(rng, {10, 3}));
    wb.push_back(random_tensor(rng, {10, 4}));
  }
  FrozenDecisions<double> frozen;
  {
    ParamBinding<double> p(m.params, nullptr);
    frozen = freeze(run_pipeline(img, p, m.model));
  }
  auto score = [&](ParamBinding<double>& p) {
    const auto out = run_pipeline(img, p, m.model, 0, &frozen);
    Tensor<double> total;
    for (std::size_t t = 0; t < 3; ++t) {
      const auto term = add(sum(mul(out.stages[t].predictions.class_logits, wl[t])),
                            sum(mul(out.stages[t].predictions.boxes, wb[t])));
      total = t == 0 ? term : add(total, term);
    }
    return total;
  };

  SUBCASE("every parameter receives a gradient") {
    // A single image token would make stage-0 attention scores irrelevant, so use 64x64.
    const auto larger = noise_image(7, 64, 64);
    Tape<double> tape;
    ParamBinding<double> p(m.params, &tape);
    const auto out = run_pipeline(larger, p, m.model);
    Tensor<double> total = sum(out.stages[0].predictions.class_logits);
    for (std::size_t t = 0; t < 3; ++t) {
      total = add(total, sum(mul(out.stages[t].predictions.class_logits, wl[t])));
      total = add(total, sum(mul(out.stages[t].predictions.boxes, wb[t])));
    }
    const auto grads = p.collect(tape.backward(total));
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      double norm = 0;
      for (auto g : grads[i].data()) norm += g * g;
      CHECK_MESSAGE(norm > 0, m.params.entry(i).name);
    }
  }
  SUBCASE("finite differences over a 32x32 image") {
    const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-3, .abs_floor = 1e-6, .max_coords = 6};
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      auto r = check_parameter_gradient(m.params, ParamId{i}, score, opts);
      CHECK_MESSAGE(r.passed(), m.params.entry(i).name << ": " << describe(r));
    }
  }
}
