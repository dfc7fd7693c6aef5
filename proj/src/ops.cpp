// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace imfa {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using ConstMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using MutMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstStrided = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using MutStrided = Eigen::Map<RowMat<Real>, 0, Eigen::OuterStride<>>;

template <typename Real>
Tensor<Real> emit(const Tensor<Real>& value, std::initializer_list<const Tensor<Real>*> inputs,
                  BackwardFn<Real> backward) {
  auto* tape = common_tape<Real>(inputs);
  if (!tape) return value;
  return tape->record(value, inputs, std::move(backward));
}

template <typename Real>
void require_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename Real>
void require_rank(const char* op, const Tensor<Real>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

template <typename Real>
void require_finite(const char* op, std::span<const Real> xs) {
  for (auto v : xs) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

std::size_t leading_rows(const Shape& s) { return s.empty() ? 1 : s[0]; }

// Elementwise unary op with derivative computed from (x, y).
template <typename Real, typename F, typename DF>
Tensor<Real> unary(const Tensor<Real>& x, F f, DF df) {
  Buffer<Real> out(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
  Tensor<Real> y(x.shape(), std::move(out));
  return emit<Real>(y, {&x}, [x, y, df](BackwardContext<Real>& ctx) {
    auto g = ctx.grad_in(0);
    auto go = ctx.grad_out();
    auto xs = x.data();
    auto ys = y.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * df(xs[i], ys[i]);
  });
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("add", a, b);
  Buffer<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return emit<Real>(Tensor<Real>(a.shape(), std::move(out)), {&a, &b}, [](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs(k)) continue;
      auto g = ctx.grad_in(k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("sub", a, b);
  Buffer<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return emit<Real>(Tensor<Real>(a.shape(), std::move(out)), {&a, &b}, [](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    if (ctx.needs(0)) {
      auto g = ctx.grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
    if (ctx.needs(1)) {
      auto g = ctx.grad_in(1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
    }
  });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("mul", a, b);
  Buffer<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return emit<Real>(Tensor<Real>(a.shape(), std::move(out)), {&a, &b}, [a, b](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    if (ctx.needs(0)) {
      auto g = ctx.grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * b[i];
    }
    if (ctx.needs(1)) {
      auto g = ctx.grad_in(1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * a[i];
    }
  });
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("div", a, b);
  Buffer<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return emit<Real>(Tensor<Real>(a.shape(), std::move(out)), {&a, &b}, [a, b](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    if (ctx.needs(0)) {
      auto g = ctx.grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] / b[i];
    }
    if (ctx.needs(1)) {
      auto g = ctx.grad_in(1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i] * a[i] / (b[i] * b[i]);
    }
  });
}

namespace {
template <typename Real, typename Pick>
Tensor<Real> select_binary(const char* op, const Tensor<Real>& a, const Tensor<Real>& b, Pick pick_a) {
  require_same_shape(op, a, b);
  Buffer<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick_a(a[i], b[i]) ? a[i] : b[i];
  return emit<Real>(Tensor<Real>(a.shape(), std::move(out)), {&a, &b},
                    [a, b, pick_a](BackwardContext<Real>& ctx) {
                      auto go = ctx.grad_out();
                      for (std::size_t k = 0; k < 2; ++k) {
                        if (!ctx.needs(k)) continue;
                        auto g = ctx.grad_in(k);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          const bool took_a = pick_a(a[i], b[i]);
                          if (took_a == (k == 0)) g[i] += go[i];
                        }
                      }
                    });
}
}  // namespace

template <typename Real>
Tensor<Real> minimum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return select_binary<Real>("minimum", a, b, [](Real x, Real y) { return x <= y; });
}

template <typename Real>
Tensor<Real> maximum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return select_binary<Real>("maximum", a, b, [](Real x, Real y) { return x >= y; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real s) {
  return unary<Real>(x, [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real s) {
  return unary<Real>(x, [s](Real v) { return v + s; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return unary<Real>(
      x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return unary<Real>(
      x,
      [](Real v) {
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return unary<Real>(x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  for (auto v : x.data()) {
    if (!(v > 0)) throw NumericError("log: non-positive input");
  }
  return unary<Real>(x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
Tensor<Real> abs(const Tensor<Real>& x) {
  return unary<Real>(
      x, [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

template <typename Real>
Tensor<Real> inverse_sigmoid(const Tensor<Real>& x, Real eps) {
  return unary<Real>(
      x,
      [eps](Real v) {
        const Real c = std::clamp(v, eps, Real(1) - eps);
        return std::log(c / (Real(1) - c));
      },
      [eps](Real v, Real) {
        if (v < eps || v > Real(1) - eps) return Real(0);
        return Real(1) / (v * (Real(1) - v));
      });
}

template <typename Real>
Tensor<Real> add_row(const Tensor<Real>& x, const Tensor<Real>& b) {
  const std::size_t n = b.numel();
  if (x.rank() == 0 || x.shape().back() != n || b.rank() != 1) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(b.shape()) + " over " +
                         shape_string(x.shape()));
  }
  Buffer<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b[i % n];
  return emit<Real>(Tensor<Real>(x.shape(), std::move(out)), {&x, &b}, [n](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    if (ctx.needs(0)) {
      auto g = ctx.grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
    if (ctx.needs(1)) {
      auto g = ctx.grad_in(1);
      for (std::size_t i = 0; i < go.size(); ++i) g[i % n] += go[i];
    }
  });
}

template <typename Real>
Tensor<Real> mul_rows(const Tensor<Real>& x, const Tensor<Real>& w) {
  const std::size_t rows = leading_rows(x.shape());
  if (w.numel() != rows) {
    throw DimensionError("mul_rows: " + shape_string(w.shape()) + " does not give one weight per row of " +
                         shape_string(x.shape()));
  }
  const std::size_t width = x.numel() / rows;
  Buffer<Real> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = x[r * width + c] * w[r];
  }
  return emit<Real>(Tensor<Real>(x.shape(), std::move(out)), {&x, &w},
                    [x, w, rows, width](BackwardContext<Real>& ctx) {
                      auto go = ctx.grad_out();
                      if (ctx.needs(0)) {
                        auto g = ctx.grad_in(0);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < width; ++c) g[r * width + c] += go[r * width + c] * w[r];
                        }
                      }
                      if (ctx.needs(1)) {
                        auto g = ctx.grad_in(1);
                        for (std::size_t r = 0; r < rows; ++r) {
                          Real acc = 0;
                          for (std::size_t c = 0; c < width; ++c) acc += go[r * width + c] * x[r * width + c];
                          g[r] += acc;
                        }
                      }
                    });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (auto v : x.data()) total += v;
  return emit<Real>(Tensor<Real>::scalar(total), {&x}, [](BackwardContext<Real>& ctx) {
    auto g = ctx.grad_in(0);
    const Real go = ctx.grad_out()[0];
    for (auto& v : g) v += go;
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Buffer<Real> out(static_cast<std::size_t>(m * n));
  MutMap<Real>(out.data(), m, n).noalias() = ConstMap<Real>(a.data().data(), m, k) * ConstMap<Real>(b.data().data(), k, n);
  return emit<Real>(Tensor<Real>({a.dim(0), b.dim(1)}, std::move(out)), {&a, &b},
                    [a, b, m, k, n](BackwardContext<Real>& ctx) {
                      ConstMap<Real> go(ctx.grad_out().data(), m, n);
                      if (ctx.needs(0)) {
                        MutMap<Real>(ctx.grad_in(0).data(), m, k).noalias() +=
                            go * ConstMap<Real>(b.data().data(), k, n).transpose();
                      }
                      if (ctx.needs(1)) {
                        MutMap<Real>(ctx.grad_in(1).data(), k, n).noalias() +=
                            ConstMap<Real>(a.data().data(), m, k).transpose() * go;
                      }
                    });
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.numel() != w.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) +
                         ", bias " + shape_string(b.shape()) + " are incompatible");
  }
  const auto m = static_cast<Eigen::Index>(x.dim(0));
  const auto k = static_cast<Eigen::Index>(x.dim(1));
  const auto n = static_cast<Eigen::Index>(w.dim(1));
  Buffer<Real> out(static_cast<std::size_t>(m * n));
  MutMap<Real> y(out.data(), m, n);
  y.noalias() = ConstMap<Real>(x.data().data(), m, k) * ConstMap<Real>(w.data().data(), k, n);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(b.data().data(), n);
  return emit<Real>(Tensor<Real>({x.dim(0), w.dim(1)}, std::move(out)), {&x, &w, &b},
                    [x, w, m, k, n](BackwardContext<Real>& ctx) {
                      ConstMap<Real> go(ctx.grad_out().data(), m, n);
                      if (ctx.needs(0)) {
                        MutMap<Real>(ctx.grad_in(0).data(), m, k).noalias() +=
                            go * ConstMap<Real>(w.data().data(), k, n).transpose();
                      }
                      if (ctx.needs(1)) {
                        MutMap<Real>(ctx.grad_in(1).data(), k, n).noalias() +=
                            ConstMap<Real>(x.data().data(), m, k).transpose() * go;
                      }
                      if (ctx.needs(2)) {
                        Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(ctx.grad_in(2).data(), n) +=
                            go.colwise().sum();
                      }
                    });
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = leading_rows(x.shape());
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t width = x.numel() / rows;
  Shape shape = x.shape();
  shape[0] = end - begin;
  Buffer<Real> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                        x.data().begin() + static_cast<std::ptrdiff_t>(end * width));
  return emit<Real>(Tensor<Real>(std::move(shape), std::move(out)), {&x},
                    [begin, width](BackwardContext<Real>& ctx) {
                      auto g = ctx.grad_in(0);
                      auto go = ctx.grad_out();
                      for (std::size_t i = 0; i < go.size(); ++i) g[begin * width + i] += go[i];
                    });
}

template <typename Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<const Tensor<Real>*> inputs;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail || p.rank() == 0) {
      throw DimensionError("concat_rows: " + shape_string(p.shape()) + " does not match " +
                           shape_string(parts[0].shape()));
    }
    rows += p.dim(0);
    inputs.push_back(&p);
    offsets.push_back(total);
    total += p.numel();
  }
  Buffer<Real> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = parts[0].shape();
  shape[0] = rows;
  Tensor<Real> y(std::move(shape), std::move(out));
  auto* tape = common_tape<Real>(inputs);
  if (!tape) return y;
  return tape->record(y, inputs, [offsets](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (!ctx.needs(k)) continue;
      auto g = ctx.grad_in(k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[offsets[k] + i];
    }
  });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows) {
  const std::size_t n = leading_rows(x.shape());
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t width = x.numel() / n;
  Buffer<Real> out;
  out.reserve(rows.size() * width);
  for (auto r : rows) {
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " + shape_string(x.shape()));
    out.insert(out.end(), x.data().begin() + static_cast<std::ptrdiff_t>(r * width),
               x.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return emit<Real>(Tensor<Real>(std::move(shape), std::move(out)), {&x},
                    [idx, width](BackwardContext<Real>& ctx) {
                      auto g = ctx.grad_in(0);
                      auto go = ctx.grad_out();
                      for (std::size_t i = 0; i < idx.size(); ++i) {
                        for (std::size_t c = 0; c < width; ++c) g[idx[i] * width + c] += go[i * width + c];
                      }
                    });
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Buffer<Real> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * cols + begin + c];
  }
  return emit<Real>(Tensor<Real>({rows, w}, std::move(out)), {&x},
                    [rows, cols, begin, w](BackwardContext<Real>& ctx) {
                      auto g = ctx.grad_in(0);
                      auto go = ctx.grad_out();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += go[r * w + c];
                      }
                    });
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<const Tensor<Real>*> inputs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: " + shape_string(p.shape()) + " does not match " +
                           shape_string(parts[0].shape()));
    }
    cols += p.dim(1);
    widths.push_back(p.dim(1));
    inputs.push_back(&p);
  }
  Buffer<Real> out(rows * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) out[r * cols + off + c] = p[r * w + c];
    }
    off += w;
  }
  Tensor<Real> y({rows, cols}, std::move(out));
  auto* tape = common_tape<Real>(inputs);
  if (!tape) return y;
  return tape->record(y, inputs, [rows, cols, widths](BackwardContext<Real>& ctx) {
    auto go = ctx.grad_out();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (ctx.needs(k)) {
        auto g = ctx.grad_in(k);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += go[r * cols + off + c];
        }
      }
      off += w;
    }
  });
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  require_finite<Real>("softmax", x.data());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Buffer<Real> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Real mx = x[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
      Real total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real e = std::exp(x[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  }
  Tensor<Real> y(x.shape(), std::move(out));
  return emit<Real>(y, {&x}, [y, outer, inner, n](BackwardContext<Real>& ctx) {
    auto g = ctx.grad_in(0);
    auto go = ctx.grad_out();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        Real dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += go[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t at = base + i * inner;
          g[at] += y[at] * (go[at] - dot);
        }
      }
    }
  });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  Buffer<Real> out(x.numel()), xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data().data() + r * d;
    Real mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<Real>(d);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const Real h = (xr[i] - mu) * is;
      xhat[r * d + i] = h;
      out[r * d + i] = h * gain[i] + bias[i];
    }
  }
  return emit<Real>(Tensor<Real>(x.shape(), std::move(out)), {&x, &gain, &bias},
                    [xhat = std::move(xhat), inv_std = std::move(inv_std), gain, rows, d](BackwardContext<Real>& ctx) {
                      auto go = ctx.grad_out();
                      if (ctx.needs(0)) {
                        auto g = ctx.grad_in(0);
                        for (std::size_t r = 0; r < rows; ++r) {
                          Real m1 = 0, m2 = 0;
                          for (std::size_t i = 0; i < d; ++i) {
                            const Real dh = go[r * d + i] * gain[i];
                            m1 += dh;
                            m2 += dh * xhat[r * d + i];
                          }
                          m1 /= static_cast<Real>(d);
                          m2 /= static_cast<Real>(d);
                          for (std::size_t i = 0; i < d; ++i) {
                            const Real dh = go[r * d + i] * gain[i];
                            g[r * d + i] += inv_std[r] * (dh - m1 - xhat[r * d + i] * m2);
                          }
                        }
                      }
                      if (ctx.needs(1)) {
                        auto g = ctx.grad_in(1);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t i = 0; i < d; ++i) g[i] += go[r * d + i] * xhat[r * d + i];
                        }
                      }
                      if (ctx.needs(2)) {
                        auto g = ctx.grad_in(2);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t i = 0; i < d; ++i) g[i] += go[r * d + i];
                        }
                      }
                    });
}

namespace {
template <typename Real>
void check_attention_shapes(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>* v, std::size_t heads) {
  require_rank("attention", q, 2);
  require_rank("attention", k, 2);
  if (q.dim(1) != k.dim(1) || (v && (v->rank() != 2 || v->dim(0) != k.dim(0) || v->dim(1) != q.dim(1)))) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                         (v ? ", v " + shape_string(v->shape()) : std::string()) + " are incompatible");
  }
  if (heads == 0 || q.dim(1) % heads != 0) {
    throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " +
                         std::to_string(q.dim(1)));
  }
}

// Row-softmaxed scores of one head into probs[A×B].
template <typename Real>
void head_probs(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t heads, std::size_t h, Real* probs) {
  const auto a = static_cast<Eigen::Index>(q.dim(0));
  const auto b = static_cast<Eigen::Index>(k.dim(0));
  const auto d = static_cast<Eigen::Index>(q.dim(1));
  const auto dh = d / static_cast<Eigen::Index>(heads);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  ConstStrided<Real> qh(q.data().data() + h * dh, a, dh, Eigen::OuterStride<>(d));
  ConstStrided<Real> kh(k.data().data() + h * dh, b, dh, Eigen::OuterStride<>(d));
  MutMap<Real> p(probs, a, b);
  p.noalias() = (qh * kh.transpose()) * scale;
  for (Eigen::Index r = 0; r < a; ++r) {
    const Real mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
}
}  // namespace

template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, std::size_t heads) {
  check_attention_shapes(q, k, &v, heads);
  require_finite<Real>("attention", q.data());
  require_finite<Real>("attention", k.data());
  const auto a = static_cast<Eigen::Index>(q.dim(0));
  const auto b = static_cast<Eigen::Index>(k.dim(0));
  const auto d = static_cast<Eigen::Index>(q.dim(1));
  const auto dh = d / static_cast<Eigen::Index>(heads);
  Buffer<Real> probs(heads * static_cast<std::size_t>(a * b));
  Buffer<Real> out(static_cast<std::size_t>(a * d));
  for (std::size_t h = 0; h < heads; ++h) {
    Real* ph = probs.data() + h * static_cast<std::size_t>(a * b);
    head_probs(q, k, heads, h, ph);
    ConstStrided<Real> vh(v.data().data() + h * dh, b, dh, Eigen::OuterStride<>(d));
    MutStrided<Real>(out.data() + h * dh, a, dh, Eigen::OuterStride<>(d)).noalias() = ConstMap<Real>(ph, a, b) * vh;
  }
  return emit<Real>(
      Tensor<Real>(q.shape(), std::move(out)), {&q, &k, &v},
      [q, k, v, heads, a, b, d, dh, probs = std::move(probs)](BackwardContext<Real>& ctx) {
        const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
        RowMat<Real> dp(a, b);
        for (std::size_t h = 0; h < heads; ++h) {
          ConstMap<Real> p(probs.data() + h * static_cast<std::size_t>(a * b), a, b);
          ConstStrided<Real> go(ctx.grad_out().data() + h * dh, a, dh, Eigen::OuterStride<>(d));
          ConstStrided<Real> vh(v.data().data() + h * dh, b, dh, Eigen::OuterStride<>(d));
          if (ctx.needs(2)) {
            MutStrided<Real>(ctx.grad_in(2).data() + h * dh, b, dh, Eigen::OuterStride<>(d)).noalias() +=
                p.transpose() * go;
          }
          if (!ctx.needs(0) && !ctx.needs(1)) continue;
          dp.noalias() = go * vh.transpose();
          // dS = P ⊙ (dP − rowsum(dP ⊙ P))
          for (Eigen::Index r = 0; r < a; ++r) {
            const Real dot = (dp.row(r).array() * p.row(r).array()).sum();
            dp.row(r) = (p.row(r).array() * (dp.row(r).array() - dot)) * scale;
          }
          if (ctx.needs(0)) {
            ConstStrided<Real> kh(k.data().data() + h * dh, b, dh, Eigen::OuterStride<>(d));
            MutStrided<Real>(ctx.grad_in(0).data() + h * dh, a, dh, Eigen::OuterStride<>(d)).noalias() += dp * kh;
          }
          if (ctx.needs(1)) {
            ConstStrided<Real> qh(q.data().data() + h * dh, a, dh, Eigen::OuterStride<>(d));
            MutStrided<Real>(ctx.grad_in(1).data() + h * dh, b, dh, Eigen::OuterStride<>(d)).noalias() +=
                dp.transpose() * qh;
          }
        }
      });
}

template <typename Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t heads, std::size_t head) {
  check_attention_shapes<Real>(q, k, nullptr, heads);
  if (head >= heads) throw DimensionError("attention_weights: head index out of range");
  Buffer<Real> probs(q.dim(0) * k.dim(0));
  head_probs(q, k, heads, head, probs.data());
  return Tensor<Real>({q.dim(0), k.dim(0)}, std::move(probs));
}

namespace {
struct BilinearTap {
  std::size_t x0, x1, y0, y1;
  double wx, wy;
  bool clamp_x, clamp_y;
};

BilinearTap bilinear_tap(double x, double y, std::size_t h, std::size_t w) {
  BilinearTap t{};
  double fx = x * static_cast<double>(w) - 0.5;
  double fy = y * static_cast<double>(h) - 0.5;
  const double max_x = static_cast<double>(w - 1);
  const double max_y = static_cast<double>(h - 1);
  t.clamp_x = fx < 0 || fx > max_x;
  t.clamp_y = fy < 0 || fy > max_y;
  fx = std::clamp(fx, 0.0, max_x);
  fy = std::clamp(fy, 0.0, max_y);
  t.x0 = static_cast<std::size_t>(std::floor(fx));
  t.y0 = static_cast<std::size_t>(std::floor(fy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = fx - static_cast<double>(t.x0);
  t.wy = fy - static_cast<double>(t.y0);
  return t;
}
}  // namespace

template <typename Real>
Tensor<Real> bilinear_sample(const Tensor<Real>& grid, const Tensor<Real>& points) {
  require_rank("bilinear_sample", grid, 3);
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw DimensionError("bilinear_sample: points must be [P×2], got " + shape_string(points.shape()));
  }
  require_finite<Real>("bilinear_sample", points.data());
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2), p = points.dim(0);
  std::vector<BilinearTap> taps(p);
  Buffer<Real> out(p * d);
  const Real* g = grid.data().data();
  for (std::size_t i = 0; i < p; ++i) {
    const auto t = bilinear_tap(static_cast<double>(points[2 * i]), static_cast<double>(points[2 * i + 1]), h, w);
    taps[i] = t;
    const Real wx = static_cast<Real>(t.wx), wy = static_cast<Real>(t.wy);
    const Real w00 = (1 - wx) * (1 - wy), w01 = wx * (1 - wy), w10 = (1 - wx) * wy, w11 = wx * wy;
    const Real* c00 = g + (t.y0 * w + t.x0) * d;
    const Real* c01 = g + (t.y0 * w + t.x1) * d;
    const Real* c10 = g + (t.y1 * w + t.x0) * d;
    const Real* c11 = g + (t.y1 * w + t.x1) * d;
    Real* o = out.data() + i * d;
    for (std::size_t c = 0; c < d; ++c) o[c] = w00 * c00[c] + w01 * c01[c] + w10 * c10[c] + w11 * c11[c];
  }
  return emit<Real>(Tensor<Real>({p, d}, std::move(out)), {&grid, &points},
                    [grid, taps = std::move(taps), h, w, d, p](BackwardContext<Real>& ctx) {
                      auto go = ctx.grad_out();
                      if (ctx.needs(0)) {
                        auto gg = ctx.grad_in(0);
                        for (std::size_t i = 0; i < p; ++i) {
                          const auto& t = taps[i];
                          const Real wx = static_cast<Real>(t.wx), wy = static_cast<Real>(t.wy);
                          const Real ws[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
                          const std::size_t at[4] = {t.y0 * w + t.x0, t.y0 * w + t.x1, t.y1 * w + t.x0,
                                                     t.y1 * w + t.x1};
                          for (int c4 = 0; c4 < 4; ++c4) {
                            Real* dst = gg.data() + at[c4] * d;
                            for (std::size_t c = 0; c < d; ++c) dst[c] += ws[c4] * go[i * d + c];
                          }
                        }
                      }
                      if (ctx.needs(1)) {
                        auto gp = ctx.grad_in(1);
                        const Real* g = grid.data().data();
                        for (std::size_t i = 0; i < p; ++i) {
                          const auto& t = taps[i];
                          const Real wx = static_cast<Real>(t.wx), wy = static_cast<Real>(t.wy);
                          const Real* c00 = g + (t.y0 * w + t.x0) * d;
                          const Real* c01 = g + (t.y0 * w + t.x1) * d;
                          const Real* c10 = g + (t.y1 * w + t.x0) * d;
                          const Real* c11 = g + (t.y1 * w + t.x1) * d;
                          Real dfx = 0, dfy = 0;
                          for (std::size_t c = 0; c < d; ++c) {
                            const Real gc = go[i * d + c];
                            dfx += gc * ((1 - wy) * (c01[c] - c00[c]) + wy * (c11[c] - c10[c]));
                            dfy += gc * ((1 - wx) * (c10[c] - c00[c]) + wx * (c11[c] - c01[c]));
                          }
                          if (!t.clamp_x) gp[2 * i] += dfx * static_cast<Real>(w);
                          if (!t.clamp_y) gp[2 * i + 1] += dfy * static_cast<Real>(h);
                        }
                      }
                    });
}

template <typename Real>
Tensor<Real> avg_pool2x2(const Tensor<Real>& grid) {
  require_rank("avg_pool2x2", grid, 3);
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2x2: odd extents in " + shape_string(grid.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Buffer<Real> out(oh * ow * d);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        const Real s = grid[((2 * i) * w + 2 * j) * d + c] + grid[((2 * i) * w + 2 * j + 1) * d + c] +
                       grid[((2 * i + 1) * w + 2 * j) * d + c] + grid[((2 * i + 1) * w + 2 * j + 1) * d + c];
        out[(i * ow + j) * d + c] = s * Real(0.25);
      }
    }
  }
  return emit<Real>(Tensor<Real>({oh, ow, d}, std::move(out)), {&grid}, [w, d, oh, ow](BackwardContext<Real>& ctx) {
    auto g = ctx.grad_in(0);
    auto go = ctx.grad_out();
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          const Real v = go[(i * ow + j) * d + c] * Real(0.25);
          g[((2 * i) * w + 2 * j) * d + c] += v;
          g[((2 * i) * w + 2 * j + 1) * d + c] += v;
          g[((2 * i + 1) * w + 2 * j) * d + c] += v;
          g[((2 * i + 1) * w + 2 * j + 1) * d + c] += v;
        }
      }
    }
  });
}

template <typename Real>
Tensor<Real> grouped_matvec(const Tensor<Real>& weights, const Tensor<Real>& x, std::size_t out_dim,
                            std::size_t in_dim) {
  require_rank("grouped_matvec", weights, 2);
  require_rank("grouped_matvec", x, 2);
  const std::size_t groups = weights.dim(0);
  if (weights.dim(1) != out_dim * in_dim || x.dim(1) != in_dim || x.dim(0) % groups != 0) {
    throw DimensionError("grouped_matvec: weights " + shape_string(weights.shape()) + " and input " +
                         shape_string(x.shape()) + " are incompatible with " + std::to_string(out_dim) + "x" +
                         std::to_string(in_dim) + " blocks");
  }
  const std::size_t per = x.dim(0) / groups;
  const auto o = static_cast<Eigen::Index>(out_dim), i = static_cast<Eigen::Index>(in_dim),
             m = static_cast<Eigen::Index>(per);
  Buffer<Real> out(x.dim(0) * out_dim);
  for (std::size_t g = 0; g < groups; ++g) {
    ConstMap<Real> wg(weights.data().data() + g * out_dim * in_dim, o, i);
    ConstMap<Real> xg(x.data().data() + g * per * in_dim, m, i);
    MutMap<Real>(out.data() + g * per * out_dim, m, o).noalias() = xg * wg.transpose();
  }
  return emit<Real>(Tensor<Real>({x.dim(0), out_dim}, std::move(out)), {&weights, &x},
                    [weights, x, groups, per, o, i, m](BackwardContext<Real>& ctx) {
                      const auto od = static_cast<std::size_t>(o), id = static_cast<std::size_t>(i);
                      for (std::size_t g = 0; g < groups; ++g) {
                        ConstMap<Real> go(ctx.grad_out().data() + g * per * od, m, o);
                        if (ctx.needs(0)) {
                          MutMap<Real>(ctx.grad_in(0).data() + g * od * id, o, i).noalias() +=
                              go.transpose() * ConstMap<Real>(x.data().data() + g * per * id, m, i);
                        }
                        if (ctx.needs(1)) {
                          MutMap<Real>(ctx.grad_in(1).data() + g * per * id, m, i).noalias() +=
                              go * ConstMap<Real>(weights.data().data() + g * od * id, o, i);
                        }
                      }
                    });
}

template <typename Real>
Tensor<Real> sine_embed_points(const Tensor<Real>& points, std::size_t d) {
  if (d == 0 || d % 4 != 0) throw DimensionError("sine_embed_points: width " + std::to_string(d) + " not divisible by 4");
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw DimensionError("sine_embed_points: points must be [P×2], got " + shape_string(points.shape()));
  }
  const std::size_t p = points.dim(0), half = d / 2, pairs = half / 2;
  std::vector<double> freq(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    freq[k] = 2.0 * std::numbers::pi / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(half));
  }
  Buffer<Real> out(p * d);
  for (std::size_t i = 0; i < p; ++i) {
    // y occupies the first half, x the second.
    const double coord[2] = {static_cast<double>(points[2 * i + 1]), static_cast<double>(points[2 * i])};
    for (std::size_t axis = 0; axis < 2; ++axis) {
      for (std::size_t k = 0; k < pairs; ++k) {
        const double a = coord[axis] * freq[k];
        out[i * d + axis * half + 2 * k] = static_cast<Real>(std::sin(a));
        out[i * d + axis * half + 2 * k + 1] = static_cast<Real>(std::cos(a));
      }
    }
  }
  return emit<Real>(Tensor<Real>({p, d}, std::move(out)), {&points},
                    [points, freq, p, d, half, pairs](BackwardContext<Real>& ctx) {
                      auto g = ctx.grad_in(0);
                      auto go = ctx.grad_out();
                      for (std::size_t i = 0; i < p; ++i) {
                        const double coord[2] = {static_cast<double>(points[2 * i + 1]),
                                                 static_cast<double>(points[2 * i])};
                        double acc[2] = {0, 0};
                        for (std::size_t axis = 0; axis < 2; ++axis) {
                          for (std::size_t k = 0; k < pairs; ++k) {
                            const double a = coord[axis] * freq[k];
                            acc[axis] += static_cast<double>(go[i * d + axis * half + 2 * k]) * std::cos(a) * freq[k];
                            acc[axis] -= static_cast<double>(go[i * d + axis * half + 2 * k + 1]) * std::sin(a) * freq[k];
                          }
                        }
                        g[2 * i + 1] += static_cast<Real>(acc[0]);
                        g[2 * i] += static_cast<Real>(acc[1]);
                      }
                    });
}

template <typename Real>
Tensor<Real> sigmoid_focal_loss(const Tensor<Real>& logits, const Tensor<Real>& targets, Real alpha, Real gamma) {
  require_same_shape("sigmoid_focal_loss", logits, targets);
  require_finite<Real>("sigmoid_focal_loss", logits.data());
  const std::size_t n = logits.numel();
  Buffer<Real> dz(n);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real z = logits[i], t = targets[i];
    const Real p = z >= 0 ? Real(1) / (Real(1) + std::exp(-z)) : std::exp(z) / (Real(1) + std::exp(z));
    const Real ce = std::max(z, Real(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    const Real pt = p * t + (1 - p) * (1 - t);
    const Real at = alpha * t + (1 - alpha) * (1 - t);
    const Real q = 1 - pt;
    const Real mod = std::pow(q, gamma);
    total += at * mod * ce;
    const Real dmod = q > 0 ? gamma * std::pow(q, gamma - 1) : Real(0);
    // d(1-pt)/dz = -(2t-1) p (1-p)
    dz[i] = at * (-dmod * (2 * t - 1) * p * (1 - p) * ce + mod * (p - t));
  }
  return emit<Real>(Tensor<Real>::scalar(total), {&logits}, [dz = std::move(dz)](BackwardContext<Real>& ctx) {
    auto g = ctx.grad_in(0);
    const Real go = ctx.grad_out()[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * dz[i];
  });
}

#define IMFA_OPS_INSTANTIATE(Real)                                                                            \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                       \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                       \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                       \
  template Tensor<Real> div(const Tensor<Real>&, const Tensor<Real>&);                                       \
  template Tensor<Real> minimum(const Tensor<Real>&, const Tensor<Real>&);                                   \
  template Tensor<Real> maximum(const Tensor<Real>&, const Tensor<Real>&);                                   \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                                    \
  template Tensor<Real> add_scalar(const Tensor<Real>&, Real);                                               \
  template Tensor<Real> relu(const Tensor<Real>&);                                                           \
  template Tensor<Real> sigmoid(const Tensor<Real>&);                                                        \
  template Tensor<Real> exp(const Tensor<Real>&);                                                            \
  template Tensor<Real> log(const Tensor<Real>&);                                                            \
  template Tensor<Real> abs(const Tensor<Real>&);                                                            \
  template Tensor<Real> inverse_sigmoid(const Tensor<Real>&, Real);                                          \
  template Tensor<Real> add_row(const Tensor<Real>&, const Tensor<Real>&);                                   \
  template Tensor<Real> mul_rows(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> sum(const Tensor<Real>&);                                                            \
  template Tensor<Real> mean(const Tensor<Real>&);                                                           \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                                    \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);               \
  template Tensor<Real> slice_rows(const Tensor<Real>&, std::size_t, std::size_t);                           \
  template Tensor<Real> concat_rows(const std::vector<Tensor<Real>>&);                                       \
  template Tensor<Real> gather_rows(const Tensor<Real>&, std::span<const std::size_t>);                      \
  template Tensor<Real> slice_cols(const Tensor<Real>&, std::size_t, std::size_t);                           \
  template Tensor<Real> concat_cols(const std::vector<Tensor<Real>>&);                                       \
  template Tensor<Real> softmax(const Tensor<Real>&, std::size_t);                                           \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, Real);     \
  template Tensor<Real> attention(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, std::size_t); \
  template Tensor<Real> attention_weights(const Tensor<Real>&, const Tensor<Real>&, std::size_t, std::size_t); \
  template Tensor<Real> bilinear_sample(const Tensor<Real>&, const Tensor<Real>&);                           \
  template Tensor<Real> avg_pool2x2(const Tensor<Real>&);                                                    \
  template Tensor<Real> grouped_matvec(const Tensor<Real>&, const Tensor<Real>&, std::size_t, std::size_t);  \
  template Tensor<Real> sine_embed_points(const Tensor<Real>&, std::size_t);                                 \
  template Tensor<Real> sigmoid_focal_loss(const Tensor<Real>&, const Tensor<Real>&, Real, Real);

IMFA_OPS_INSTANTIATE(float)
IMFA_OPS_INSTANTIATE(double)

}  // namespace imfa
