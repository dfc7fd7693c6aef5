// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "imfa/gradcheck.hpp"
#include "imfa/transformer.hpp"
#include "test_util.hpp"

using namespace imfa;
using imfa::testing::max_abs_diff;
using imfa::testing::random_tensor;
using imfa::testing::randomize;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix rows_of(const Tensor<double>& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  }
  return m;
}

Matrix affine(const Matrix& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  Matrix y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * w[i * out + o];
      y[r][o] = acc;
    }
  }
  return y;
}

// Loop-level multi-head attention with projections.
Matrix mha_oracle(const Matrix& q, const Matrix& k, const Matrix& v, const ParameterSet<double>& ps,
                  const AttentionParams& a) {
  const auto pq = affine(q, ps.value(a.query.weight), ps.value(a.query.bias));
  const auto pk = affine(k, ps.value(a.key.weight), ps.value(a.key.bias));
  const auto pv = affine(v, ps.value(a.value.weight), ps.value(a.value.bias));
  const std::size_t dh = a.d / a.heads;
  Matrix cat(q.size(), std::vector<double>(a.d, 0.0));
  for (std::size_t h = 0; h < a.heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> s(k.size());
      double mx = -1e300;
      for (std::size_t j = 0; j < k.size(); ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += pq[i][h * dh + c] * pk[j][h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < k.size(); ++j) {
        for (std::size_t c = 0; c < dh; ++c) cat[i][h * dh + c] += s[j] / z * pv[j][h * dh + c];
      }
    }
  }
  return affine(cat, ps.value(a.output.weight), ps.value(a.output.bias));
}

double max_diff(const Tensor<double>& t, const Matrix& m) {
  double out = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) out = std::max(out, std::abs(t[i * m[i].size() + j] - m[i][j]));
  }
  return out;
}

Tensor<double> permute_rows(const Tensor<double>& t, const std::vector<std::size_t>& perm) {
  return gather_rows(t, std::span<const std::size_t>(perm));
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Tensor<double> random_boxes(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.3);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) v.insert(v.end(), {c(rng), c(rng), s(rng), s(rng)});
  return Tensor<double>({n, 4}, v);
}

void zero(ParameterSet<double>& ps, ParamId id) { ps.set(id, Tensor<double>::zeros(ps.value(id).shape())); }

}  // namespace

TEST_CASE("mha") {
  ParameterSet<double> ps;
  Initializer init(11);
  std::mt19937_64 rng(12);

  SUBCASE("single key makes the output independent of the query") {
    const auto a = AttentionParams::create(ps, init, "attn", 8, 2);
    randomize(ps, rng);
    ParamBinding<double> p(ps, nullptr);
    const auto k = random_tensor(rng, {1, 8});
    const auto v = random_tensor(rng, {1, 8});
    const auto out = mha(random_tensor(rng, {5, 8}), k, v, p, a);
    const auto expect = a.output(p, a.value(p, v));
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(out[i * 8 + c] - expect[c]) < 1e-14);
    }
  }
  SUBCASE("identical keys give uniform weights") {
    const auto a = AttentionParams::create(ps, init, "attn", 8, 4);
    randomize(ps, rng);
    ParamBinding<double> p(ps, nullptr);
    const auto row = random_tensor(rng, {1, 8});
    const auto k = concat_rows(std::vector<Tensor<double>>(7, row));
    const auto pq = a.query(p, random_tensor(rng, {3, 8}));
    const auto pk = a.key(p, k);
    for (std::size_t h = 0; h < 4; ++h) {
      const auto w = attention_weights(pq, pk, 4, h);
      for (auto x : w.data()) CHECK(std::abs(x - 1.0 / 7) < 1e-14);
    }
  }
  SUBCASE("matches a loop oracle") {
    for (std::size_t heads : {1u, 2u}) {
      ParameterSet<double> local;
      const auto a = AttentionParams::create(local, init, "attn", 4, heads);
      randomize(local, rng);
      ParamBinding<double> p(local, nullptr);
      const auto q = random_tensor(rng, {3, 4}), k = random_tensor(rng, {5, 4}), v = random_tensor(rng, {5, 4});
      const auto out = mha(q, k, v, p, a);
      CHECK(max_diff(out, mha_oracle(rows_of(q), rows_of(k), rows_of(v), local, a)) < 1e-10);
    }
  }
  SUBCASE("shape errors") {
    const auto a = AttentionParams::create(ps, init, "attn", 8, 2);
    ParamBinding<double> p(ps, nullptr);
    CHECK_THROWS_AS(mha(Tensor<double>::zeros({2, 6}), Tensor<double>::zeros({3, 8}), Tensor<double>::zeros({3, 8}), p, a),
                    DimensionError);
    CHECK_THROWS_AS(mha(Tensor<double>::zeros({2, 8}), Tensor<double>::zeros({3, 8}), Tensor<double>::zeros({4, 8}), p, a),
                    DimensionError);
    CHECK_THROWS_AS(AttentionParams::create(ps, init, "bad", 8, 3), ConfigError);
  }
}

TEST_CASE("encoder_layer") {
  ParameterSet<double> ps;
  Initializer init(21);
  std::mt19937_64 rng(22);
  const auto enc = EncoderLayerParams::create(ps, init, "enc", 8, 2);
  randomize(ps, rng);

  SUBCASE("shape is preserved for any token count") {
    ParamBinding<double> p(ps, nullptr);
    for (std::size_t t : {1u, 2u, 17u, 64u}) {
      const auto out = encoder_layer(random_tensor(rng, {t, 8}), random_tensor(rng, {t, 8}), p, enc);
      CHECK(out.shape() == Shape{t, 8});
    }
  }
  SUBCASE("zero output projections reduce to the residual path") {
    for (auto id : {enc.attn.output.weight, enc.attn.output.bias, enc.ffn.output.weight, enc.ffn.output.bias}) {
      zero(ps, id);
    }
    ParamBinding<double> p(ps, nullptr);
    const auto x = random_tensor(rng, {9, 8});
    const auto out = encoder_layer(x, random_tensor(rng, {9, 8}), p, enc);
    CHECK(out.values() == x.values());
  }
  SUBCASE("permuting tokens with their positions permutes the output") {
    ParamBinding<double> p(ps, nullptr);
    const auto x = random_tensor(rng, {12, 8}), pos = random_tensor(rng, {12, 8});
    const auto perm = shuffled(12, rng);
    const auto a = permute_rows(encoder_layer(x, pos, p, enc), perm);
    const auto b = encoder_layer(permute_rows(x, perm), permute_rows(pos, perm), p, enc);
    CHECK(max_abs_diff(a, b) < 1e-13);
  }
  SUBCASE("position shape must match") {
    ParamBinding<double> p(ps, nullptr);
    CHECK_THROWS_AS(encoder_layer(Tensor<double>::zeros({4, 8}), Tensor<double>::zeros({5, 8}), p, enc),
                    DimensionError);
  }
}

TEST_CASE("decoder_layer") {
  ParameterSet<double> ps;
  Initializer init(31);
  std::mt19937_64 rng(32);
  const auto dec = DecoderLayerParams::create(ps, init, "dec", 8, 2);
  randomize(ps, rng);

  SUBCASE("a single query attends only to itself") {
    ParamBinding<double> p(ps, nullptr);
    const QuerySet<double> q{random_tensor(rng, {1, 8}), random_boxes(rng, 1)};
    const auto n1 = dec.norm_self(p, q.content);
    const auto self = dec.self_attn.output(p, dec.self_attn.value(p, n1));
    // Compare against the layer with self-attention replaced by its single-key closed form.
    const auto mem = random_tensor(rng, {6, 8}), mem_pos = random_tensor(rng, {6, 8});
    auto x = add(q.content, self);
    const auto qpos = query_positions(q.boxes, 8);
    x = add(x, mha(add(dec.norm_cross(p, x), qpos), add(mem, mem_pos), mem, p, dec.cross_attn));
    x = add(x, feed_forward(dec.norm_ffn(p, x), p, dec.ffn));
    CHECK(max_abs_diff(decoder_layer(q, mem, mem_pos, p, dec), x) < 1e-14);
  }
  SUBCASE("memory order does not matter") {
    ParamBinding<double> p(ps, nullptr);
    const QuerySet<double> q{random_tensor(rng, {5, 8}), random_boxes(rng, 5)};
    const auto mem = random_tensor(rng, {20, 8}), mem_pos = random_tensor(rng, {20, 8});
    const auto perm = shuffled(20, rng);
    const auto a = decoder_layer(q, mem, mem_pos, p, dec);
    const auto b = decoder_layer(q, permute_rows(mem, perm), permute_rows(mem_pos, perm), p, dec);
    CHECK(max_abs_diff(a, b) < 1e-13);
  }
  SUBCASE("gradient through one layer") {
    const QuerySet<double> q{random_tensor(rng, {4, 8}), random_boxes(rng, 4)};
    const auto mem = random_tensor(rng, {6, 8}), mem_pos = random_tensor(rng, {6, 8});
    const auto w = random_tensor(rng, {4, 8});
    const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-4, .abs_floor = 1e-6};
    auto wrt_queries = check_gradient(
        [&](const Tensor<double>& c) {
          ParamBinding<double> p(ps, nullptr);
          return sum(mul(decoder_layer(QuerySet<double>{c, q.boxes}, mem, mem_pos, p, dec), w));
        },
        q.content, opts);
    CHECK_MESSAGE(wrt_queries.passed(), describe(wrt_queries));
    auto wrt_boxes = check_gradient(
        [&](const Tensor<double>& b) {
          ParamBinding<double> p(ps, nullptr);
          return sum(mul(decoder_layer(QuerySet<double>{q.content, b}, mem, mem_pos, p, dec), w));
        },
        q.boxes, opts);
    CHECK_MESSAGE(wrt_boxes.passed(), describe(wrt_boxes));
    auto wrt_memory = check_gradient(
        [&](const Tensor<double>& m) {
          ParamBinding<double> p(ps, nullptr);
          return sum(mul(decoder_layer(q, m, mem_pos, p, dec), w));
        },
        mem, opts);
    CHECK_MESSAGE(wrt_memory.passed(), describe(wrt_memory));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto r = check_parameter_gradient(
          ps, ParamId{i}, [&](ParamBinding<double>& p) { return sum(mul(decoder_layer(q, mem, mem_pos, p, dec), w)); },
          opts);
      CHECK_MESSAGE(r.passed(), ps.entry(i).name << ": " << describe(r));
    }
  }
  SUBCASE("memory and positions must agree") {
    ParamBinding<double> p(ps, nullptr);
    const QuerySet<double> q{random_tensor(rng, {2, 8}), random_boxes(rng, 2)};
    CHECK_THROWS_AS(decoder_layer(q, Tensor<double>::zeros({3, 8}), Tensor<double>::zeros({4, 8}), p, dec),
                    DimensionError);
  }
}

TEST_CASE("prediction_heads") {
  ParameterSet<double> ps;
  Initializer init(41);
  std::mt19937_64 rng(42);
  const auto heads = HeadParams::create(ps, init, "head", 8, 3);

  SUBCASE("shapes") {
    ParamBinding<double> p(ps, nullptr);
    const auto out = prediction_heads(random_tensor(rng, {6, 8}), random_boxes(rng, 6), p, heads);
    CHECK(out.class_logits.shape() == Shape{6, 3});
    CHECK(out.boxes.shape() == Shape{6, 4});
  }
  SUBCASE("zero box head returns the reference boxes") {
    randomize(ps, rng);
    zero(ps, heads.box_out.weight);
    zero(ps, heads.box_out.bias);
    ParamBinding<double> p(ps, nullptr);
    const auto ref = random_boxes(rng, 10);
    const auto out = prediction_heads(random_tensor(rng, {10, 8}), ref, p, heads);
    CHECK(max_abs_diff(out.boxes, ref) < 1e-15);
  }
  SUBCASE("boxes stay inside the open unit cube") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      std::mt19937_64 r(seed);
      randomize(ps, r, -1.0, 1.0);
      ParamBinding<double> p(ps, nullptr);
      const auto out = prediction_heads(random_tensor(r, {4, 8}, -3, 3), random_boxes(r, 4), p, heads);
      for (auto v : out.boxes.data()) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
      }
      for (auto v : out.class_logits.data()) REQUIRE(std::isfinite(v));
    }
  }
}

TEST_CASE("encoder and decoder together") {
  ParameterSet<double> ps;
  Initializer init(51);
  std::mt19937_64 rng(52);
  const auto enc = EncoderLayerParams::create(ps, init, "enc", 8, 2);
  const auto dec = DecoderLayerParams::create(ps, init, "dec", 8, 2);
  const auto heads = HeadParams::create(ps, init, "head", 8, 3);
  randomize(ps, rng);
  const auto tokens = random_tensor(rng, {16, 8}), pos = random_tensor(rng, {16, 8});
  const auto content = random_tensor(rng, {4, 8});
  const auto boxes = random_boxes(rng, 4);
  const auto wl = random_tensor(rng, {4, 3}), wb = random_tensor(rng, {4, 4});
  auto score = [&](ParamBinding<double>& p, const Tensor<double>& x) {
    const auto mem = encoder_layer(x, pos, p, enc);
    const auto q = decoder_layer(QuerySet<double>{content, boxes}, mem, pos, p, dec);
    const auto out = prediction_heads(q, boxes, p, heads);
    return add(sum(mul(out.class_logits, wl)), sum(mul(out.boxes, wb)));
  };
  const GradCheckOptions opts{.step = 1e-6, .tolerance = 1e-4, .abs_floor = 1e-6};
  auto r = check_gradient(
      [&](const Tensor<double>& x) {
        ParamBinding<double> p(ps, nullptr);
        return score(p, x);
      },
      tokens, opts);
  CHECK_MESSAGE(r.passed(), describe(r));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto rp = check_parameter_gradient(
        ps, ParamId{i}, [&](ParamBinding<double>& p) { return score(p, tokens); }, opts);
    CHECK_MESSAGE(rp.passed(), ps.entry(i).name << ": " << describe(rp));
  }
}
