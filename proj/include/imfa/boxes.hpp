// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "imfa/tensor.hpp"

namespace imfa {

/// Axis-aligned box in normalized corner form.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }
  bool operator==(const Box&) const = default;
};

Box from_cxcywh(double cx, double cy, double w, double h);
std::array<double, 4> to_cxcywh(const Box& b);

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
/// IoU − (|C| − |A ∪ B|) / |C| with C the smallest enclosing box; in (−1, 1].
double giou(const Box& a, const Box& b);

/// Row i of a [N × 4] (cx, cy, w, h) tensor.
template <typename Real>
Box box_row(const Tensor<Real>& boxes, std::size_t i) {
  return from_cxcywh(boxes[i * 4], boxes[i * 4 + 1], boxes[i * 4 + 2], boxes[i * 4 + 3]);
}

}  // namespace imfa
