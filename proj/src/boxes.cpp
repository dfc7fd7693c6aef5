// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/boxes.hpp"

#include <algorithm>

namespace imfa {

Box from_cxcywh(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::array<double, 4> to_cxcywh(const Box& b) {
  return {0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1), b.width(), b.height()};
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return w > 0 && h > 0 ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x1, b.x1) - std::min(a.x0, b.x0)) * (std::max(a.y1, b.y1) - std::min(a.y0, b.y0));
  if (uni <= 0 || hull <= 0) return 0.0;
  // hull ≥ union holds exactly; the max drops round-off when one box contains the other.
  return inter / uni - std::max(0.0, hull - uni) / hull;
}

}  // namespace imfa
