// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/parameters.hpp"

#include <cmath>
#include <numbers>

namespace imfa {

template <typename Real>
ParamId ParameterSet<Real>::add(std::string name, Tensor<Real> value, ParamGroup group) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), group, value.constant()});
  return ParamId{entries_.size() - 1};
}

template <typename Real>
void ParameterSet<Real>::set(ParamId id, Tensor<Real> value) {
  auto& e = entries_.at(id.index);
  if (value.shape() != e.value.shape()) {
    throw DimensionError("parameter '" + e.name + "' has shape " + shape_string(e.value.shape()) + ", got " +
                         shape_string(value.shape()));
  }
  e.value = value.constant();
}

template <typename Real>
std::optional<ParamId> ParameterSet<Real>::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return ParamId{i};
  }
  return std::nullopt;
}

template <typename Real>
std::size_t ParameterSet<Real>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename Real>
const Tensor<Real>& ParamBinding<Real>::operator()(ParamId id) {
  auto& slot = bound_.at(id.index);
  if (!slot) {
    const auto& v = params_.value(id);
    slot = tape_ ? tape_->variable(v) : v;
  }
  return *slot;
}

template <typename Real>
void ParamBinding<Real>::bind(ParamId id, const Tensor<Real>& value) {
  if (value.shape() != params_.value(id).shape()) {
    throw DimensionError("bind: parameter '" + params_.entry(id).name + "' has shape " +
                         shape_string(params_.value(id).shape()) + ", got " + shape_string(value.shape()));
  }
  bound_.at(id.index) = value;
}

template <typename Real>
std::vector<Tensor<Real>> ParamBinding<Real>::collect(const Gradients<Real>& grads) const {
  std::vector<Tensor<Real>> out;
  out.reserve(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i]) {
      out.push_back(grads.of(*bound_[i]));
    } else {
      out.push_back(Tensor<Real>::zeros(params_.entry(i).value.shape()));
    }
  }
  return out;
}

double Initializer::next_unit() { return unit_double(engine_); }

template <typename Real>
Tensor<Real> Initializer::xavier(std::size_t fan_in, std::size_t fan_out, Shape shape) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform<Real>(std::move(shape), -bound, bound);
}

template <typename Real>
Tensor<Real> Initializer::uniform(Shape shape, double lo, double hi) {
  Buffer<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(lo + (hi - lo) * next_unit());
  return Tensor<Real>(std::move(shape), std::move(v));
}

template <typename Real>
Tensor<Real> Initializer::normal(Shape shape, double stddev) {
  Buffer<Real> v(shape_numel(shape));
  for (auto& x : v) {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u = 1.0 - next_unit();
    const double w = next_unit();
    x = static_cast<Real>(stddev * std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * w));
  }
  return Tensor<Real>(std::move(shape), std::move(v));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class ParamBinding<float>;
template class ParamBinding<double>;
template Tensor<float> Initializer::xavier<float>(std::size_t, std::size_t, Shape);
template Tensor<double> Initializer::xavier<double>(std::size_t, std::size_t, Shape);
template Tensor<float> Initializer::uniform<float>(Shape, double, double);
template Tensor<double> Initializer::uniform<double>(Shape, double, double);
template Tensor<float> Initializer::normal<float>(Shape, double);
template Tensor<double> Initializer::normal<double>(Shape, double);

}  // namespace imfa
