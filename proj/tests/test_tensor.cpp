// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "imfa/gradcheck.hpp"
#include "imfa/verification.hpp"
#include "imfa/ops.hpp"
#include "test_util.hpp"

using namespace imfa;
using imfa::testing::random_tensor;

namespace {

// Independent bilinear oracle: tent weights max(0, 1 - |f - i|) over every cell,
// with the continuous coordinate clamped to the span of cell centres.
std::vector<double> tent_oracle(const Tensor<double>& grid, double x, double y) {
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  const double fx = std::min(std::max(x * w - 0.5, 0.0), double(w - 1));
  const double fy = std::min(std::max(y * h - 0.5, 0.0), double(h - 1));
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double wy = std::max(0.0, 1.0 - std::abs(fy - double(i)));
    if (wy == 0) continue;
    for (std::size_t j = 0; j < w; ++j) {
      const double wx = std::max(0.0, 1.0 - std::abs(fx - double(j)));
      if (wx == 0) continue;
      for (std::size_t c = 0; c < d; ++c) out[c] += wy * wx * grid[(i * w + j) * d + c];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<double>({0, 3}, {}), DimensionError);
  const Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == shape_numel(t.shape()));
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    std::mt19937_64 rng(1);
    const auto a = random_tensor(rng, {3, 4});
    const Tensor<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto out = matmul(eye, a);
    CHECK(out.values() == a.values());
  }
  SUBCASE("hand arithmetic") {
    const auto out = matmul(Tensor<double>({2, 2}, {1, 2, 3, 4}), Tensor<double>({2, 1}, {1, 1}));
    CHECK(out.shape() == Shape{2, 1});
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 7.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("by [2x3]") != std::string::npos);
    }
  }
  SUBCASE("backward matches central differences") {
    std::mt19937_64 rng(7);
    const auto a = random_tensor(rng, {5, 4});
    const auto b = random_tensor(rng, {4, 3});
    const auto weights = random_tensor(rng, {5, 3});
    GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-5, .abs_floor = 1e-8};
    auto ra = check_gradient([&](const Tensor<double>& x) { return sum(mul(matmul(x, b), weights)); }, a, opts);
    auto rb = check_gradient([&](const Tensor<double>& x) { return sum(mul(matmul(a, x), weights)); }, b, opts);
    CHECK_MESSAGE(ra.passed(), describe(ra));
    CHECK_MESSAGE(rb.passed(), describe(rb));
  }
}

TEST_CASE("softmax") {
  SUBCASE("uniform on equal logits") {
    const auto y = softmax(Tensor<double>::zeros({4}), 0);
    for (auto v : y.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("large logits do not overflow") {
    const auto y = softmax(Tensor<double>({2}, {1000, 0}), 0);
    CHECK(std::abs(y[0] - 1.0) < 1e-12);
    CHECK(std::abs(y[1]) < 1e-12);
  }
  SUBCASE("slices sum to one, all entries in (0, 1]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_tensor(rng, {3, 7, 5}, -20, 20);
      for (std::size_t axis = 0; axis < 3; ++axis) {
        const auto y = softmax(x, axis);
        const std::size_t n = x.dim(axis);
        std::size_t inner = 1;
        for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.dim(i);
        const std::size_t outer = x.numel() / (n * inner);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) {
              const double v = y[(o * n + i) * inner + in];
              CHECK(v > 0);
              CHECK(v <= 1);
              s += v;
            }
            CHECK(std::abs(s - 1) < 1e-12);
          }
        }
      }
    }
  }
  SUBCASE("non-finite input is rejected") {
    CHECK_THROWS_AS(softmax(Tensor<double>({2}, {1, std::nan("")}), 0), NumericError);
  }
}

TEST_CASE("layer_norm") {
  const auto ones = Tensor<double>::full({6}, 1.0);
  const auto zeros = Tensor<double>::zeros({6});
  SUBCASE("constant vector maps to zero") {
    const auto y = layer_norm(Tensor<double>::full({2, 6}, 3.5), ones, zeros, 1e-5);
    for (auto v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("zero gain yields the bias") {
    std::mt19937_64 rng(5);
    const auto bias = random_tensor(rng, {6});
    const auto y = layer_norm(random_tensor(rng, {3, 6}), zeros, bias, 1e-5);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == bias[i % 6]);
  }
  SUBCASE("moments of normalized rows") {
    std::mt19937_64 rng(9);
    const auto y = layer_norm(random_tensor(rng, {20, 64}, -10, 12), Tensor<double>::full({64}, 1.0),
                              Tensor<double>::zeros({64}), 1e-5);
    for (std::size_t r = 0; r < 20; ++r) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < 64; ++i) m += y[r * 64 + i];
      m /= 64;
      for (std::size_t i = 0; i < 64; ++i) v += (y[r * 64 + i] - m) * (y[r * 64 + i] - m);
      v /= 64;
      CHECK(std::abs(m) < 1e-10);
      CHECK(std::abs(v - 1) < 1e-6);
    }
  }
}

TEST_CASE("bilinear_sample") {
  SUBCASE("cell centres are exact") {
    std::mt19937_64 rng(11);
    const auto grid = random_tensor(rng, {8, 16, 5});
    std::vector<double> pts;
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 16; ++j) {
        pts.push_back((j + 0.5) / 16);
        pts.push_back((i + 0.5) / 8);
      }
    }
    const auto out = bilinear_sample(grid, Tensor<double>({128, 2}, pts));
    CHECK(out.values() == grid.values());
  }
  SUBCASE("midpoint of a two-cell column") {
    const auto out = bilinear_sample(Tensor<double>({2, 1, 1}, {0, 1}), Tensor<double>({1, 2}, {0.5, 0.5}));
    CHECK(out[0] == 0.5);
  }
  SUBCASE("random points match the tent-weight oracle, including clamped borders") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t h = 1 + rng() % 9, w = 1 + rng() % 9;
      const auto grid = random_tensor(rng, {h, w, 4});
      const auto points = random_tensor(rng, {30, 2}, -0.2, 1.2);
      const auto out = bilinear_sample(grid, points);
      for (std::size_t p = 0; p < 30; ++p) {
        const auto ref = tent_oracle(grid, points[2 * p], points[2 * p + 1]);
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(out[p * 4 + c] - ref[c]) <= 1e-12);
      }
    }
  }
  SUBCASE("linear along an axis between adjacent centres") {
    std::mt19937_64 rng(17);
    const auto grid = random_tensor(rng, {4, 4, 3});
    for (double t : {0.0, 0.1, 0.37, 0.5, 0.9}) {
      const double x = (1.5 + t) / 4, y = 2.5 / 4;
      const auto out = bilinear_sample(grid, Tensor<double>({1, 2}, {x, y}));
      for (std::size_t c = 0; c < 3; ++c) {
        const double expect = (1 - t) * grid[(2 * 4 + 1) * 3 + c] + t * grid[(2 * 4 + 2) * 3 + c];
        CHECK(std::abs(out[c] - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("backward contract") {
  SUBCASE("sum gives all-ones gradient") {
    Tape<double> tape;
    const auto p = tape.variable(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    const auto grads = tape.backward(sum(p));
    const auto g = grads.of(p);
    for (auto v : g.data()) CHECK(v == 1.0);
  }
  SUBCASE("matmul chain matches finite differences") {
    std::mt19937_64 rng(21);
    const auto a = random_tensor(rng, {3, 4});
    const auto b = random_tensor(rng, {4, 5});
    const auto c = random_tensor(rng, {5, 2});
    auto r = check_gradient(
        [&](const Tensor<double>& x) { return sum(sigmoid(matmul(matmul(a, x), c))); }, b,
        {.step = 1e-6, .tolerance = 1e-4, .abs_floor = 1e-8});
    CHECK_MESSAGE(r.passed(), describe(r));
  }
  SUBCASE("detached tensors receive zero gradient") {
    Tape<double> tape;
    const auto p = tape.variable(Tensor<double>({3}, {1, 2, 3}));
    const auto q = tape.variable(Tensor<double>({3}, {4, 5, 6}));
    const auto loss = sum(add(mul(p, p), detach(q)));
    const auto grads = tape.backward(loss);
    const auto gq = grads.of(q);
    for (auto v : gq.data()) CHECK(v == 0.0);
    CHECK(grads.of(p)[2] == 6.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape<double> tape;
    const auto p = tape.variable(Tensor<double>({3}, {1, 2, 3}));
    CHECK_THROWS_AS(tape.backward(scale(p, 2.0)), ContractError);
  }
  SUBCASE("second sweep is rejected") {
    Tape<double> tape;
    const auto p = tape.variable(Tensor<double>({3}, {1, 2, 3}));
    const auto loss = sum(p);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
    CHECK_THROWS_AS(tape.variable(p), ContractError);
  }
  SUBCASE("inputs precede their consumers") {
    Tape<double> tape;
    const auto p = tape.variable(Tensor<double>({2}, {1, 2}));
    const auto y = sum(mul(add(p, p), p));
    for (int n = 0; n < static_cast<int>(tape.size()); ++n) {
      for (int in : tape.inputs_of(n)) CHECK(in < n);
    }
    (void)y;
  }
  SUBCASE("gradients are bit-identical across repeated sweeps") {
    std::mt19937_64 rng(23);
    const auto x = random_tensor(rng, {6, 8});
    const auto w = random_tensor(rng, {8, 8});
    auto run = [&] {
      Tape<double> tape;
      const auto wv = tape.variable(w);
      const auto y = softmax(matmul(x, wv), 1);
      return tape.backward(sum(mul(y, y))).of(wv).values();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("check_gradient harness") {
  std::mt19937_64 rng(29);
  SUBCASE("half squared norm") {
    const auto x = random_tensor(rng, {10});
    const auto r = check_gradient([](const Tensor<double>& v) { return scale(sum(mul(v, v)), 0.5); }, x,
                                  {.step = 1e-4, .tolerance = 1e-8, .abs_floor = 1e-8});
    CHECK_MESSAGE(r.passed(), describe(r));
    CHECK(r.checked == 10);
  }
  SUBCASE("softmax of a constant vector") {
    const auto x = Tensor<double>::full({5}, 0.3);
    const auto weights = random_tensor(rng, {5});
    const auto r = check_gradient([&](const Tensor<double>& v) { return sum(mul(softmax(v, 0), weights)); }, x);
    CHECK_MESSAGE(r.passed(), describe(r));
  }
  SUBCASE("reports failures") {
    // Detaching one factor halves the taped derivative of v·|v|.
    const auto x = Tensor<double>({2}, {-0.5, 0.7});
    const auto r = check_gradient(
        [](const Tensor<double>& v) { return sum(mul(v, detach(abs(v)))); }, x);
    CHECK_FALSE(r.passed());
  }
}

TEST_CASE("every differentiable primitive passes a seeded gradient check") {
  for (const auto& c : op_gradient_checks(31)) CHECK_MESSAGE(c.report.passed(), c.name << ": " << describe(c.report));
}
