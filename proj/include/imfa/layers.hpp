// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "imfa/ops.hpp"
#include "imfa/parameters.hpp"

namespace imfa {

struct LinearLayer {
  ParamId weight;  // [in × out]
  ParamId bias;    // [out]
  std::size_t in = 0;
  std::size_t out = 0;

  template <typename Real>
  static LinearLayer create(ParameterSet<Real>& params, Initializer& init, const std::string& name, std::size_t in,
                            std::size_t out, ParamGroup group = ParamGroup::kMain) {
    LinearLayer l;
    l.in = in;
    l.out = out;
    l.weight = params.add(name + ".weight", init.xavier<Real>(in, out, {in, out}), group);
    l.bias = params.add(name + ".bias", Tensor<Real>::zeros({out}), group);
    return l;
  }

  template <typename Real>
  Tensor<Real> operator()(ParamBinding<Real>& p, const Tensor<Real>& x) const {
    return linear(x, p(weight), p(bias));
  }
};

struct LayerNormLayer {
  ParamId gain;
  ParamId bias;

  template <typename Real>
  static LayerNormLayer create(ParameterSet<Real>& params, const std::string& name, std::size_t d,
                               ParamGroup group = ParamGroup::kMain) {
    return {params.add(name + ".gain", Tensor<Real>::full({d}, Real(1)), group),
            params.add(name + ".bias", Tensor<Real>::zeros({d}), group)};
  }

  template <typename Real>
  Tensor<Real> operator()(ParamBinding<Real>& p, const Tensor<Real>& x) const {
    return layer_norm(x, p(gain), p(bias), Real(1e-5));
  }
};

}  // namespace imfa
