// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the reverse-mode tape that records operations
// on them. Tensor values never change after construction; a Tensor that was
// produced on a Tape carries the id of the node that produced it, and
// Tape::backward walks those nodes in reverse to accumulate vector-Jacobian
// products.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "imfa/errors.hpp"

namespace imfa {

using Shape = std::vector<std::size_t>;

/// Allocator returning 64-byte aligned storage. Vectorized reductions peel
/// elements up to the first aligned address, so a fixed alignment keeps the
/// summation order, and therefore every result, independent of heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename Real>
using Buffer = std::vector<Real, AlignedAllocator<Real>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename Real>
class Tape;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  /// Constant tensor; throws DimensionError if the data length disagrees with the shape.
  Tensor(Shape shape, Buffer<Real> data);
  Tensor(Shape shape, const std::vector<Real>& data) : Tensor(std::move(shape), Buffer<Real>(data.begin(), data.end())) {}
  Tensor(Shape shape, std::initializer_list<Real> data) : Tensor(std::move(shape), Buffer<Real>(data)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor scalar(Real value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool empty() const { return numel() == 0; }

  std::span<const Real> data() const;
  /// Copy of the values.
  std::vector<Real> values() const { return {data().begin(), data().end()}; }
  Real operator[](std::size_t flat) const { return (*data_)[flat]; }
  /// Value of a one-element tensor.
  Real item() const;

  Tape<Real>* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr; }

  /// Same values, shape reinterpreted. Shares storage and node.
  Tensor reshaped(Shape shape) const;
  /// Same storage with the tape link dropped.
  Tensor constant() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = -1;
    return out;
  }

 private:
  friend class Tape<Real>;

  Shape shape_;
  std::shared_ptr<const Buffer<Real>> data_;
  Tape<Real>* tape_ = nullptr;
  int node_ = -1;
};

/// Gradient buffers handed to a node's backward rule.
template <typename Real>
class BackwardContext {
 public:
  BackwardContext(std::span<const Real> grad_out, std::vector<Buffer<Real>>& grads,
                  std::span<const int> inputs, const std::vector<Shape>& shapes)
      : grad_out_(grad_out), grads_(grads), inputs_(inputs), shapes_(shapes) {}

  std::span<const Real> grad_out() const { return grad_out_; }
  /// True if input `k` is recorded on the tape and so wants a gradient.
  bool needs(std::size_t k) const { return inputs_[k] >= 0; }
  /// Accumulation buffer of input `k`, zero-initialised on first access.
  std::span<Real> grad_in(std::size_t k);

 private:
  std::span<const Real> grad_out_;
  std::vector<Buffer<Real>>& grads_;
  std::span<const int> inputs_;
  const std::vector<Shape>& shapes_;
};

template <typename Real>
using BackwardFn = std::function<void(BackwardContext<Real>&)>;

/// Result of Tape::backward: one gradient per recorded node.
template <typename Real>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Buffer<Real>> grads, std::vector<Shape> shapes, const Tape<Real>* tape)
      : grads_(std::move(grads)), shapes_(std::move(shapes)), tape_(tape) {}

  /// Gradient with respect to `t`; zeros when `t` is unreachable from the loss or off the tape.
  Tensor<Real> of(const Tensor<Real>& t) const;
  /// Raw buffer for a node, empty when the node received no gradient.
  std::span<const Real> raw(int node) const;

 private:
  std::vector<Buffer<Real>> grads_;
  std::vector<Shape> shapes_;
  const Tape<Real>* tape_ = nullptr;
};

/// Append-only record of a single forward pass. One writer at a time.
template <typename Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node whose gradient is wanted.
  Tensor<Real> variable(const Tensor<Real>& value);

  /// Records an operation output. `inputs` holds the operand tensors; constants
  /// (off-tape operands) get no gradient. When every operand is constant the
  /// result is returned as a constant and nothing is recorded.
  Tensor<Real> record(const Tensor<Real>& value, std::initializer_list<const Tensor<Real>*> inputs,
                      BackwardFn<Real> backward);
  Tensor<Real> record(const Tensor<Real>& value, const std::vector<const Tensor<Real>*>& inputs,
                      BackwardFn<Real> backward);

  /// Reverse sweep from a scalar loss. A tape can be swept once.
  Gradients<Real> backward(const Tensor<Real>& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::span<const int> inputs_of(int node) const { return nodes_.at(static_cast<std::size_t>(node)).inputs; }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn<Real> backward;
  };

  std::vector<Node> nodes_;
  std::vector<Shape> shapes_;
  bool consumed_ = false;
};

/// Tape shared by a set of operands, or nullptr if they are all constants.
/// Throws ContractError if operands live on different tapes.
template <typename Real>
Tape<Real>* common_tape(std::initializer_list<const Tensor<Real>*> inputs);
template <typename Real>
Tape<Real>* common_tape(const std::vector<const Tensor<Real>*>& inputs);

/// Constant copy of `t` with no tape link.
template <typename Real>
Tensor<Real> detach(const Tensor<Real>& t);

/// Element type conversion of a constant tensor.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace imfa
