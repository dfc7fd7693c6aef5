// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace imfa {

namespace {

// Primary cost with an exact secondary key; ordered lexicographically. The
// secondary encodes the pair-list order so that the optimum is unique.
struct Cost {
  double primary = 0;
  __int128 secondary = 0;

  Cost operator+(const Cost& o) const { return {primary + o.primary, secondary + o.secondary}; }
  Cost operator-(const Cost& o) const { return {primary - o.primary, secondary - o.secondary}; }
  Cost& operator+=(const Cost& o) { return *this = *this + o; }
  Cost& operator-=(const Cost& o) { return *this = *this - o; }
  bool operator<(const Cost& o) const {
    return primary < o.primary || (primary == o.primary && secondary < o.secondary);
  }
};

// Shortest augmenting path Hungarian method with potentials; a is n×m, n ≤ m.
// Returns for each row its column.
std::vector<std::size_t> solve(const std::vector<std::vector<Cost>>& a, std::size_t n, std::size_t m) {
  const Cost inf{std::numeric_limits<double>::infinity(), 0};
  std::vector<Cost> u(n + 1), v(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<Cost> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      Cost delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Cost cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  }
  return col_of;
}

// Weight of pairing prediction i with ground truth j, (j − G)·(G + 1)^(N − 1 − i).
// Reading an assignment as the digit string (j_0, …, j_{N−1}) with G for
// "unmatched", the secondary total orders assignments lexicographically.
// Returns false when the weights could overflow, in which case ties fall back
// to the solver's natural order.
bool tie_weights(std::size_t n, std::size_t g, std::vector<__int128>& pow) {
  const double bits = static_cast<double>(n + 1) * std::log2(static_cast<double>(g + 1)) +
                      std::log2(static_cast<double>(std::max(n, g) + 1)) + 2;
  if (bits > 120) return false;
  pow.assign(n, 1);
  for (std::size_t i = n; i-- > 0;) pow[i] = (i + 1 < n) ? pow[i + 1] * static_cast<__int128>(g + 1) : 1;
  return true;
}

template <typename Real>
double focal_cost(Real logit, double alpha, double gamma) {
  const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
  const double pos = alpha * std::pow(1 - p, gamma) * -std::log(p + 1e-8);
  const double neg = (1 - alpha) * std::pow(p, gamma) * -std::log(1 - p + 1e-8);
  return pos - neg;
}

// Corner coordinates of [P×4] (cx, cy, w, h) boxes as four [P×1] columns.
template <typename Real>
std::array<Tensor<Real>, 4> corners(const Tensor<Real>& b) {
  const auto c = slice_cols(b, 0, 2);
  const auto half = scale(slice_cols(b, 2, 4), Real(0.5));
  const auto lo = sub(c, half), hi = add(c, half);
  return {slice_cols(lo, 0, 1), slice_cols(lo, 1, 2), slice_cols(hi, 0, 1), slice_cols(hi, 1, 2)};
}

}  // namespace

double MatchResult::total_cost(const CostMatrix& cost) const {
  double total = 0;
  for (const auto& [i, j] : pairs) total += cost.at(i, j);
  return total;
}

MatchResult hungarian_match(const CostMatrix& cost) {
  for (double c : cost.values) {
    if (!std::isfinite(c)) throw NumericError("hungarian_match: cost matrix has a non-finite entry");
  }
  const std::size_t n = cost.rows, g = cost.cols;
  MatchResult out;
  if (n == 0 || g == 0) {
    for (std::size_t i = 0; i < n; ++i) out.unmatched.push_back(i);
    return out;
  }
  std::vector<__int128> pow;
  const bool ties = tie_weights(n, g, pow);
  auto entry = [&](std::size_t i, std::size_t j) {
    const __int128 w = ties ? (static_cast<__int128>(j) - static_cast<__int128>(g)) * pow[i] : 0;
    return Cost{cost.at(i, j), w};
  };

  std::vector<std::size_t> gt_of(n, g);  // g marks unmatched
  if (n <= g) {
    std::vector<std::vector<Cost>> a(n, std::vector<Cost>(g));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < g; ++j) a[i][j] = entry(i, j);
    }
    gt_of = solve(a, n, g);
  } else {
    std::vector<std::vector<Cost>> a(g, std::vector<Cost>(n));
    for (std::size_t j = 0; j < g; ++j) {
      for (std::size_t i = 0; i < n; ++i) a[j][i] = entry(i, j);
    }
    const auto pred_of = solve(a, g, n);
    for (std::size_t j = 0; j < g; ++j) gt_of[pred_of[j]] = j;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (gt_of[i] < g) {
      out.pairs.emplace_back(i, gt_of[i]);
    } else {
      out.unmatched.push_back(i);
    }
  }
  return out;
}

void Target::validate(std::size_t classes) const {
  if (boxes.size() != labels.size()) {
    throw DataError("target has " + std::to_string(boxes.size()) + " boxes but " + std::to_string(labels.size()) +
                    " labels");
  }
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (!boxes[j].valid()) throw DataError("ground-truth box " + std::to_string(j) + " is degenerate");
    if (labels[j] >= classes) {
      throw DataError("ground-truth label " + std::to_string(labels[j]) + " out of range for " +
                      std::to_string(classes) + " classes");
    }
  }
}

template <typename Real>
CostMatrix match_cost(const Predictions<Real>& pred, const Target& target, const LossWeights& w) {
  const std::size_t n = pred.boxes.dim(0), c = pred.class_logits.dim(1);
  target.validate(c);
  CostMatrix cost(n, target.size());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto g = to_cxcywh(target.boxes[j]);
    for (std::size_t i = 0; i < n; ++i) {
      double l1 = 0;
      for (std::size_t k = 0; k < 4; ++k) l1 += std::abs(static_cast<double>(pred.boxes[i * 4 + k]) - g[k]);
      const double cls = focal_cost(pred.class_logits[i * c + target.labels[j]], w.focal_alpha, w.focal_gamma);
      cost.at(i, j) = w.cls * cls + w.l1 * l1 + w.giou * (1 - giou(box_row(pred.boxes, i), target.boxes[j]));
    }
  }
  return cost;
}

template <typename Real>
LossTerms<Real> stage_loss(const Predictions<Real>& pred, const Target& target, const MatchResult& match,
                           const LossWeights& w) {
  const std::size_t n = pred.class_logits.dim(0), c = pred.class_logits.dim(1);
  target.validate(c);
  const Real norm = static_cast<Real>(std::max<std::size_t>(1, target.size()));

  Buffer<Real> onehot(n * c, Real(0));
  for (const auto& [i, j] : match.pairs) onehot[i * c + target.labels[j]] = Real(1);
  const auto focal = sigmoid_focal_loss(pred.class_logits, Tensor<Real>({n, c}, std::move(onehot)),
                                        static_cast<Real>(w.focal_alpha), static_cast<Real>(w.focal_gamma));
  LossTerms<Real> out;
  out.total = scale(focal, static_cast<Real>(w.cls) / norm);
  out.cls = static_cast<double>(focal.item()) / norm;
  if (match.pairs.empty()) return out;

  const std::size_t p = match.pairs.size();
  std::vector<std::size_t> rows(p);
  Buffer<Real> gt(p * 4);
  for (std::size_t k = 0; k < p; ++k) {
    rows[k] = match.pairs[k].first;
    const auto g = to_cxcywh(target.boxes[match.pairs[k].second]);
    for (std::size_t a = 0; a < 4; ++a) gt[k * 4 + a] = static_cast<Real>(g[a]);
  }
  const auto pb = gather_rows(pred.boxes, rows);
  const Tensor<Real> gb({p, 4}, std::move(gt));
  const auto l1 = sum(abs(sub(pb, gb)));

  const auto [px0, py0, px1, py1] = corners(pb);
  const auto [gx0, gy0, gx1, gy1] = corners(gb);
  const auto inter = mul(relu(sub(minimum(px1, gx1), maximum(px0, gx0))), relu(sub(minimum(py1, gy1), maximum(py0, gy0))));
  const auto area_p = mul(slice_cols(pb, 2, 3), slice_cols(pb, 3, 4));
  const auto area_g = mul(slice_cols(gb, 2, 3), slice_cols(gb, 3, 4));
  const auto uni = sub(add(area_p, area_g), inter);
  const auto hull = mul(sub(maximum(px1, gx1), minimum(px0, gx0)), sub(maximum(py1, gy1), minimum(py0, gy0)));
  const auto g = sub(div(inter, uni), div(sub(hull, uni), hull));
  const auto giou_loss = add_scalar(scale(sum(g), Real(-1)), static_cast<Real>(p));

  out.total = add(out.total, scale(add(scale(l1, static_cast<Real>(w.l1)), scale(giou_loss, static_cast<Real>(w.giou))),
                                   Real(1) / norm));
  out.l1 = static_cast<double>(l1.item()) / norm;
  out.giou = static_cast<double>(giou_loss.item()) / norm;
  return out;
}

template <typename Real>
LossTerms<Real> deep_supervision(const std::vector<Predictions<Real>>& stages, const Target& target,
                                 const LossWeights& w) {
  if (stages.empty()) throw ContractError("deep_supervision: no stages");
  LossTerms<Real> out;
  for (std::size_t t = 0; t < stages.size(); ++t) {
    const auto match = hungarian_match(match_cost(stages[t], target, w));
    const auto s = stage_loss(stages[t], target, match, w);
    out.total = t == 0 ? s.total : add(out.total, s.total);
    out.cls += s.cls;
    out.l1 += s.l1;
    out.giou += s.giou;
  }
  return out;
}

template <typename Real>
LossTerms<Real> deep_supervision(const PipelineResult<Real>& result, const Target& target, const LossWeights& w) {
  std::vector<Predictions<Real>> stages;
  for (const auto& st : result.stages) stages.push_back(st.predictions);
  return deep_supervision(stages, target, w);
}

#define IMFA_MATCHING_INSTANTIATE(Real)                                                                         \
  template CostMatrix match_cost<Real>(const Predictions<Real>&, const Target&, const LossWeights&);           \
  template LossTerms<Real> stage_loss<Real>(const Predictions<Real>&, const Target&, const MatchResult&,       \
                                            const LossWeights&);                                               \
  template LossTerms<Real> deep_supervision<Real>(const std::vector<Predictions<Real>>&, const Target&,        \
                                                  const LossWeights&);                                         \
  template LossTerms<Real> deep_supervision<Real>(const PipelineResult<Real>&, const Target&, const LossWeights&);

IMFA_MATCHING_INSTANTIATE(float)
IMFA_MATCHING_INSTANTIATE(double)

}  // namespace imfa
