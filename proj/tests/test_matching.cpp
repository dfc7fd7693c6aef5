// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "imfa/gradcheck.hpp"
#include "imfa/matching.hpp"
#include "test_util.hpp"

using namespace imfa;
using imfa::testing::randomize;
using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

namespace {

// Enumerates every assignment of min(N, G) pairs; keeps the smallest total and,
// among exact ties, the lexicographically smallest sorted pair list.
struct BruteForce {
  double best = std::numeric_limits<double>::infinity();
  Pairs best_pairs;

  explicit BruteForce(const CostMatrix& c) {
    std::vector<std::size_t> gt_of(c.rows, c.cols);
    std::vector<char> used(c.cols, 0);
    recurse(c, 0, 0, gt_of, used);
  }

  void recurse(const CostMatrix& c, std::size_t i, std::size_t matched, std::vector<std::size_t>& gt_of,
               std::vector<char>& used) {
    const std::size_t need = std::min(c.rows, c.cols);
    if (i == c.rows) {
      if (matched != need) return;
      Pairs pairs;
      double total = 0;
      for (std::size_t r = 0; r < c.rows; ++r) {
        if (gt_of[r] < c.cols) {
          pairs.emplace_back(r, gt_of[r]);
          total += c.at(r, gt_of[r]);
        }
      }
      if (total < best || (total == best && pairs < best_pairs)) {
        best = total;
        best_pairs = pairs;
      }
      return;
    }
    if (c.rows - i > need - matched) {  // leave row i unmatched
      gt_of[i] = c.cols;
      recurse(c, i + 1, matched, gt_of, used);
    }
    for (std::size_t j = 0; j < c.cols; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      gt_of[i] = j;
      recurse(c, i + 1, matched + 1, gt_of, used);
      used[j] = 0;
    }
    gt_of[i] = c.cols;
  }
};

CostMatrix random_costs(std::mt19937_64& rng, std::size_t n, std::size_t g, bool integers) {
  CostMatrix c(n, g);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  std::uniform_int_distribution<int> k(0, 3);
  for (auto& v : c.values) v = integers ? k(rng) : u(rng);
  return c;
}

Target random_target(std::mt19937_64& rng, std::size_t g, std::size_t classes) {
  std::uniform_real_distribution<double> c(0.25, 0.75), s(0.05, 0.4);
  std::uniform_int_distribution<std::size_t> l(0, classes - 1);
  Target t;
  for (std::size_t j = 0; j < g; ++j) {
    t.boxes.push_back(from_cxcywh(c(rng), c(rng), s(rng), s(rng)));
    t.labels.push_back(l(rng));
  }
  return t;
}

Predictions<double> random_predictions(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.5), z(-3.0, 1.0);
  std::vector<double> logits(n * classes), boxes;
  for (auto& v : logits) v = z(rng);
  for (std::size_t i = 0; i < n; ++i) boxes.insert(boxes.end(), {c(rng), c(rng), s(rng), s(rng)});
  return {Tensor<double>({n, classes}, logits), Tensor<double>({n, 4}, boxes)};
}

// Ground truth placed at the first G rows with confident, correct logits.
Predictions<double> perfect_predictions(const Target& t, std::size_t n, std::size_t classes) {
  std::vector<double> logits(n * classes, -12.0), boxes;
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = i < t.size() ? to_cxcywh(t.boxes[i]) : std::array<double, 4>{0.5, 0.5, 0.2, 0.2};
    boxes.insert(boxes.end(), b.begin(), b.end());
    if (i < t.size()) logits[i * classes + t.labels[i]] = 12.0;
  }
  return {Tensor<double>({n, classes}, logits), Tensor<double>({n, 4}, boxes)};
}

}  // namespace

TEST_CASE("box geometry") {
  const Box a{0.1, 0.2, 0.5, 0.6};
  CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  const auto c = to_cxcywh(a);
  const Box back = from_cxcywh(c[0], c[1], c[2], c[3]);
  CHECK(std::abs(back.x0 - a.x0) < 1e-15);
  CHECK(std::abs(back.y1 - a.y1) < 1e-15);
  // Disjoint boxes: IoU 0, GIoU negative.
  const Box far{0.8, 0.8, 0.9, 0.9};
  CHECK(iou(a, far) == 0.0);
  CHECK(giou(a, far) < 0.0);
  // Hand value: two unit squares overlapping by half, hull 2×1.
  CHECK(giou(Box{0, 0, 1, 1}, Box{0.5, 0, 1.5, 1}) == doctest::Approx(1.0 / 3.0));
  std::mt19937_64 rng(3);
  const auto t = random_target(rng, 2000, 1);
  for (std::size_t j = 0; j + 1 < t.size(); ++j) {
    const double g = giou(t.boxes[j], t.boxes[j + 1]);
    REQUIRE(g > -1.0);
    REQUIRE(g <= 1.0);
    REQUIRE(g <= iou(t.boxes[j], t.boxes[j + 1]));
    REQUIRE(g == doctest::Approx(giou(t.boxes[j + 1], t.boxes[j])).epsilon(1e-14));
  }
}

TEST_CASE("hungarian_match small cases") {
  SUBCASE("1x1") {
    CostMatrix c(1, 1);
    c.at(0, 0) = 4.0;
    const auto m = hungarian_match(c);
    CHECK(m.pairs == Pairs{{0, 0}});
    CHECK(m.unmatched.empty());
  }
  SUBCASE("diagonal") {
    CostMatrix c(5, 5);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) c.at(i, j) = i == j ? 0.0 : 1.0;
    }
    CHECK(hungarian_match(c).pairs == Pairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}});
  }
  SUBCASE("no ground truth") {
    const auto m = hungarian_match(CostMatrix(4, 0));
    CHECK(m.pairs.empty());
    CHECK(m.unmatched == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("all ties pick the smallest pair list") {
    CHECK(hungarian_match(CostMatrix(4, 2)).pairs == Pairs{{0, 0}, {1, 1}});
    CHECK(hungarian_match(CostMatrix(2, 4)).pairs == Pairs{{0, 0}, {1, 1}});
  }
  SUBCASE("non-finite cost") {
    CostMatrix c(2, 2);
    c.at(1, 0) = std::nan("");
    CHECK_THROWS_AS(hungarian_match(c), NumericError);
    c.at(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian_match(c), NumericError);
  }
}

TEST_CASE("hungarian_match against brute force") {
  std::mt19937_64 rng(11);
  for (bool integers : {false, true}) {
    for (std::size_t g = 1; g <= 6; ++g) {
      for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 7;
        const auto c = random_costs(rng, n, g, integers);
        const BruteForce oracle(c);
        const auto m = hungarian_match(c);
        REQUIRE(m.pairs.size() == std::min(n, g));
        REQUIRE(m.pairs.size() + m.unmatched.size() == n);
        if (integers) {
          REQUIRE(m.total_cost(c) == oracle.best);
        } else {
          REQUIRE(std::abs(m.total_cost(c) - oracle.best) < 1e-12);
        }
        REQUIRE(m.pairs == oracle.best_pairs);
      }
    }
  }
}

TEST_CASE("hungarian_match invariances") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 10, g = 1 + rng() % 6;
    auto c = random_costs(rng, n, g, false);
    const auto base = hungarian_match(c).pairs;
    // Positive scaling and a common offset change every assignment's total alike.
    for (auto& v : c.values) v = 4.0 * v + 2.0;
    CHECK(hungarian_match(c).pairs == base);
  }
  // A prediction identical to a ground-truth box with the right class wins it.
  for (int trial = 0; trial < 50; ++trial) {
    const auto target = random_target(rng, 1 + rng() % 5, 3);
    auto pred = random_predictions(rng, 12, 3);
    std::vector<double> logits = pred.class_logits.values(), boxes = pred.boxes.values();
    std::vector<std::size_t> slot(12);
    std::iota(slot.begin(), slot.end(), 0);
    std::shuffle(slot.begin(), slot.end(), rng);
    for (std::size_t j = 0; j < target.size(); ++j) {
      const auto b = to_cxcywh(target.boxes[j]);
      std::copy(b.begin(), b.end(), boxes.begin() + static_cast<std::ptrdiff_t>(slot[j] * 4));
      for (std::size_t k = 0; k < 3; ++k) logits[slot[j] * 3 + k] = k == target.labels[j] ? 8.0 : -8.0;
    }
    const Predictions<double> p{Tensor<double>({12, 3}, logits), Tensor<double>({12, 4}, boxes)};
    for (const auto& [i, j] : hungarian_match(match_cost(p, target)).pairs) CHECK(i == slot[j]);
  }
}

TEST_CASE("match_cost") {
  std::mt19937_64 rng(13);
  const auto target = random_target(rng, 3, 4);
  const auto pred = random_predictions(rng, 5, 4);
  const auto c = match_cost(pred, target);
  REQUIRE(c.rows == 5);
  REQUIRE(c.cols == 3);
  // Entry (i, j) written out from the definition.
  const std::size_t i = 2, j = 1;
  const double p = 1.0 / (1.0 + std::exp(-pred.class_logits[i * 4 + target.labels[j]]));
  const double focal =
      0.25 * (1 - p) * (1 - p) * -std::log(p + 1e-8) - 0.75 * p * p * -std::log(1 - p + 1e-8);
  const auto g = to_cxcywh(target.boxes[j]);
  double l1 = 0;
  for (std::size_t k = 0; k < 4; ++k) l1 += std::abs(pred.boxes[i * 4 + k] - g[k]);
  const double expected = 2 * focal + 5 * l1 + 2 * (1 - giou(box_row(pred.boxes, i), target.boxes[j]));
  CHECK(c.at(i, j) == doctest::Approx(expected).epsilon(1e-12));

  Target bad = target;
  bad.boxes[0] = Box{0.5, 0.5, 0.5, 0.7};
  CHECK_THROWS_AS(match_cost(pred, bad), DataError);
  bad = target;
  bad.labels[1] = 4;
  CHECK_THROWS_AS(match_cost(pred, bad), DataError);
  CHECK(match_cost(pred, Target{}).cols == 0);
}

TEST_CASE("stage_loss") {
  std::mt19937_64 rng(14);
  const std::size_t n = 8, classes = 3;
  const auto target = random_target(rng, 4, classes);
  SUBCASE("perfect predictions") {
    const auto pred = perfect_predictions(target, n, classes);
    const auto match = hungarian_match(match_cost(pred, target));
    CHECK(match.pairs == Pairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    const auto loss = stage_loss(pred, target, match);
    CHECK(loss.cls < 1e-3);
    CHECK(loss.l1 < 1e-12);
    CHECK(loss.giou < 1e-12);
    const auto init = random_predictions(rng, n, classes);
    const auto initial = stage_loss(init, target, hungarian_match(match_cost(init, target)));
    CHECK(loss.total.item() < 0.1 * initial.total.item());
  }
  SUBCASE("components match scalar definitions") {
    const auto pred = random_predictions(rng, n, classes);
    const auto match = hungarian_match(match_cost(pred, target));
    const auto loss = stage_loss(pred, target, match);
    double l1 = 0, g = 0;
    for (const auto& [i, j] : match.pairs) {
      const auto b = to_cxcywh(target.boxes[j]);
      for (std::size_t k = 0; k < 4; ++k) l1 += std::abs(pred.boxes[i * 4 + k] - b[k]);
      g += 1 - giou(box_row(pred.boxes, i), target.boxes[j]);
    }
    CHECK(loss.l1 == doctest::Approx(l1 / 4).epsilon(1e-12));
    CHECK(loss.giou == doctest::Approx(g / 4).epsilon(1e-12));
    CHECK(loss.total.item() == doctest::Approx(2 * loss.cls + 5 * loss.l1 + 2 * loss.giou).epsilon(1e-12));
  }
  SUBCASE("empty ground truth") {
    const auto pred = random_predictions(rng, n, classes);
    const auto match = hungarian_match(match_cost(pred, Target{}));
    CHECK(match.unmatched.size() == n);
    const auto loss = stage_loss(pred, Target{}, match);
    CHECK(loss.l1 == 0.0);
    CHECK(loss.giou == 0.0);
    CHECK(loss.total.item() == doctest::Approx(2 * loss.cls));
    CHECK(loss.cls > 0.0);
  }
  SUBCASE("gradients") {
    const auto pred = random_predictions(rng, n, classes);
    const auto match = hungarian_match(match_cost(pred, target));
    const auto wrt_logits = check_gradient(
        [&](const Tensor<double>& x) { return stage_loss(Predictions<double>{x, pred.boxes}, target, match).total; },
        pred.class_logits);
    CHECK_MESSAGE(wrt_logits.passed(), describe(wrt_logits));
    const auto wrt_boxes = check_gradient(
        [&](const Tensor<double>& x) {
          return stage_loss(Predictions<double>{pred.class_logits, x}, target, match).total;
        },
        pred.boxes);
    CHECK_MESSAGE(wrt_boxes.passed(), describe(wrt_boxes));
  }
}

TEST_CASE("deep_supervision") {
  std::mt19937_64 rng(15);
  const auto target = random_target(rng, 3, 3);
  const auto a = random_predictions(rng, 6, 3), b = random_predictions(rng, 6, 3);
  const auto single = deep_supervision(std::vector<Predictions<double>>{a}, target);
  const auto direct = stage_loss(a, target, hungarian_match(match_cost(a, target)));
  CHECK(single.total.item() == direct.total.item());
  const auto both = deep_supervision(std::vector<Predictions<double>>{a, b}, target);
  const auto only_b = deep_supervision(std::vector<Predictions<double>>{b}, target);
  CHECK(both.total.item() == doctest::Approx(single.total.item() + only_b.total.item()).epsilon(1e-14));
  CHECK_THROWS_AS(deep_supervision(std::vector<Predictions<double>>{}, target), ContractError);

  SUBCASE("early stage heads receive gradients") {
    StageConfig cfg;
    cfg.d = 16;
    cfg.heads = 2;
    cfg.queries = 10;
    cfg.keypoints = 3;
    ParameterSet<double> params;
    Initializer init(4);
    const auto model = register_model(params, init, cfg);
    Image img = make_image(64, 64);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : img.data) v = u(rng);
    Tape<double> tape;
    ParamBinding<double> p(params, &tape);
    const auto out = run_pipeline(img, p, model);
    const auto grads = p.collect(tape.backward(deep_supervision(out, target).total));
    for (const auto& head : model.heads) {
      double norm = 0;
      for (auto gv : grads[head.cls.weight.index].data()) norm += gv * gv;
      CHECK(norm > 0);
    }
  }
}
