// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace imfa {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradient(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& options) {
  Tape<double> tape;
  const auto xv = tape.variable(x);
  const auto loss = f(xv);
  if (loss.numel() != 1) throw ContractError("check_gradient: function is not scalar-valued");
  // A function that ignores its argument returns a constant; its gradient is zero.
  std::vector<double> analytic(x.numel(), 0.0);
  if (loss.tape() == &tape) {
    const auto grads = tape.backward(loss);
    const auto g = grads.of(xv);
    std::copy(g.data().begin(), g.data().end(), analytic.begin());
  }

  double floor = options.abs_floor;
  if (options.noise_floor) {
    const double roundoff = 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss.item()));
    floor = std::max(floor, roundoff / (options.step * options.tolerance));
  }

  GradCheckReport report;
  const std::size_t n = x.numel();
  const std::size_t stride = (options.max_coords == 0 || options.max_coords >= n) ? 1 : n / options.max_coords;
  std::vector<double> probe = x.values();
  for (std::size_t i = 0; i < n; i += stride) {
    const double saved = probe[i];
    probe[i] = saved + options.step;
    const double up = f(Tensor<double>(x.shape(), probe)).item();
    probe[i] = saved - options.step;
    const double down = f(Tensor<double>(x.shape(), probe)).item();
    probe[i] = saved;
    const double numeric = (up - down) / (2 * options.step);
    const double err = relative_error(analytic[i], numeric, floor);
    report.max_rel_error = std::max(report.max_rel_error, err);
    if (!(err <= options.tolerance)) report.failing.push_back(i);
    ++report.checked;
  }
  return report;
}

GradCheckReport check_parameter_gradient(const ParameterSet<double>& params, ParamId id, const BoundLossFn& loss,
                                         const GradCheckOptions& options) {
  return check_gradient(
      [&](const Tensor<double>& x) {
        ParamBinding<double> p(params, nullptr);
        p.bind(id, x);
        return loss(p);
      },
      params.value(id), options);
}

std::string describe(const GradCheckReport& report) {
  std::ostringstream os;
  os << (report.passed() ? "ok" : "FAIL") << " checked=" << report.checked << " max_rel_err=" << report.max_rel_error;
  if (!report.passed()) {
    os << " failing=[";
    for (std::size_t i = 0; i < std::min<std::size_t>(report.failing.size(), 8); ++i) {
      os << (i ? "," : "") << report.failing[i];
    }
    if (report.failing.size() > 8) os << ",...";
    os << ']';
  }
  return os.str();
}

}  // namespace imfa
