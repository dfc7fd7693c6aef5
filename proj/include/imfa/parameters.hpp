// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named learned parameters and their per-forward-pass binding onto a tape.

#pragma once

#include <cstddef>
#include <optional>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "imfa/tensor.hpp"

namespace imfa {

enum class ParamGroup { kBackbone, kMain };

struct ParamId {
  std::size_t index = 0;
};

template <typename Real>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ParamGroup group = ParamGroup::kMain;
    Tensor<Real> value;
  };

  /// Throws ConfigError on duplicate names.
  ParamId add(std::string name, Tensor<Real> value, ParamGroup group = ParamGroup::kMain);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(ParamId id) const { return entries_.at(id.index); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  const Tensor<Real>& value(ParamId id) const { return entries_.at(id.index).value; }
  void set(ParamId id, Tensor<Real> value);
  void set(std::size_t i, Tensor<Real> value) { set(ParamId{i}, std::move(value)); }
  std::optional<ParamId> find(const std::string& name) const;
  std::size_t scalar_count() const;

  /// Same names, shapes and values in another precision.
  template <typename To>
  ParameterSet<To> converted() const {
    ParameterSet<To> out;
    for (const auto& e : entries_) out.add(e.name, cast<To>(e.value), e.group);
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

/// Lazily lifts parameters onto a tape the first time a forward pass uses them,
/// so each parameter is one leaf node however often it is read.
template <typename Real>
class ParamBinding {
 public:
  /// With a null tape every parameter is read as a constant.
  ParamBinding(const ParameterSet<Real>& params, Tape<Real>* tape)
      : params_(params), tape_(tape), bound_(params.size()) {}

  const Tensor<Real>& operator()(ParamId id);
  /// Substitutes `value` for a parameter in this pass (used by gradient checks).
  void bind(ParamId id, const Tensor<Real>& value);
  Tape<Real>* tape() const { return tape_; }
  const ParameterSet<Real>& params() const { return params_; }

  /// Per-parameter gradients after `tape()->backward`; zeros for parameters
  /// never read or not reachable from the loss.
  std::vector<Tensor<Real>> collect(const Gradients<Real>& grads) const;

 private:
  const ParameterSet<Real>& params_;
  Tape<Real>* tape_;
  std::vector<std::optional<Tensor<Real>>> bound_;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double unit_double(std::mt19937_64& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

/// Independent seed for stream `stream` of `seed` (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic initialisers over a 64-bit Mersenne engine.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [-bound, bound) with bound = sqrt(6 / (fan_in + fan_out)).
  template <typename Real>
  Tensor<Real> xavier(std::size_t fan_in, std::size_t fan_out, Shape shape);
  template <typename Real>
  Tensor<Real> uniform(Shape shape, double lo, double hi);
  template <typename Real>
  Tensor<Real> normal(Shape shape, double stddev);

  double next_unit();

 private:
  std::mt19937_64 engine_;
};

}  // namespace imfa
