// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "imfa/parameters.hpp"
#include "imfa/tensor.hpp"

namespace imfa {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that near-zero gradients are
  /// compared in absolute terms.
  double abs_floor = 1e-6;
  /// Raises the floor to the central-difference round-off level,
  /// 16·ε·max(1, |f(x)|) / (step · tolerance), so exact zeros are not failed on noise.
  bool noise_floor = true;
  /// Coordinates to probe; 0 means every coordinate, otherwise an even stride.
  std::size_t max_coords = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::vector<std::size_t> failing;
  bool passed() const { return failing.empty(); }
};

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the tape gradient of scalar `f` at `x` with central differences
/// (f(x + h·e) − f(x − h·e)) / 2h, coordinate by coordinate.
GradCheckReport check_gradient(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& options = {});

using BoundLossFn = std::function<Tensor<double>(ParamBinding<double>&)>;

/// Gradient check of `loss` with respect to one parameter; all other
/// parameters are read as constants.
GradCheckReport check_parameter_gradient(const ParameterSet<double>& params, ParamId id, const BoundLossFn& loss,
                                         const GradCheckOptions& options = {});

/// |analytic − numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

std::string describe(const GradCheckReport& report);

}  // namespace imfa
