// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace imfa {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Buffer<Real> data) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (shape_numel(shape_) != data.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(data.size()));
  }
  data_ = std::make_shared<const Buffer<Real>>(std::move(data));
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape) {
  return full(std::move(shape), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), Buffer<Real>(n, value));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{1}, Buffer<Real>(1, value));
}

template <typename Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

template <typename Real>
std::span<const Real> Tensor<Real>::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
  return (*data_)[0];
}

template <typename Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

template <typename Real>
std::span<Real> BackwardContext<Real>::grad_in(std::size_t k) {
  auto& g = grads_[static_cast<std::size_t>(inputs_[k])];
  if (g.empty()) g.assign(shape_numel(shapes_[static_cast<std::size_t>(inputs_[k])]), Real(0));
  return {g.data(), g.size()};
}

template <typename Real>
Tensor<Real> Gradients<Real>::of(const Tensor<Real>& t) const {
  if (t.tape() != tape_ || t.node() < 0) return Tensor<Real>::zeros(t.shape());
  const auto& g = grads_[static_cast<std::size_t>(t.node())];
  if (g.empty()) return Tensor<Real>::zeros(t.shape());
  return Tensor<Real>(t.shape(), g);
}

template <typename Real>
std::span<const Real> Gradients<Real>::raw(int node) const {
  if (node < 0 || static_cast<std::size_t>(node) >= grads_.size()) return {};
  const auto& g = grads_[static_cast<std::size_t>(node)];
  return {g.data(), g.size()};
}

template <typename Real>
Tensor<Real> Tape<Real>::variable(const Tensor<Real>& value) {
  if (consumed_) throw ContractError("tape already swept; record a new forward pass");
  Tensor<Real> out = value;
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, {}});
  shapes_.push_back(value.shape());
  return out;
}

template <typename Real>
Tensor<Real> Tape<Real>::record(const Tensor<Real>& value, std::initializer_list<const Tensor<Real>*> inputs,
                                BackwardFn<Real> backward) {
  return record(value, std::vector<const Tensor<Real>*>(inputs), std::move(backward));
}

template <typename Real>
Tensor<Real> Tape<Real>::record(const Tensor<Real>& value, const std::vector<const Tensor<Real>*>& inputs,
                                BackwardFn<Real> backward) {
  if (consumed_) throw ContractError("tape already swept; record a new forward pass");
  Tensor<Real> out = value;
  out.tape_ = nullptr;
  out.node_ = -1;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  bool any = false;
  for (const auto* in : inputs) {
    if (in->tape() == this) {
      ids.push_back(in->node());
      any = true;
    } else {
      ids.push_back(-1);
    }
  }
  if (!any) return out;
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(ids), std::move(backward)});
  shapes_.push_back(out.shape());
  return out;
}

template <typename Real>
Gradients<Real> Tape<Real>::backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");
  if (consumed_) throw ContractError("backward already ran on this tape");
  consumed_ = true;

  std::vector<Buffer<Real>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.node())].assign(1, Real(1));
  for (int id = loss.node(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || !node.backward) continue;
    // The output gradient must stay valid while inputs accumulate, so move it out first.
    Buffer<Real> grad_out = std::move(g);
    BackwardContext<Real> ctx({grad_out.data(), grad_out.size()}, grads, node.inputs, shapes_);
    node.backward(ctx);
    g = std::move(grad_out);
  }
  return Gradients<Real>(std::move(grads), shapes_, this);
}

template <typename Real>
Tape<Real>* common_tape(std::initializer_list<const Tensor<Real>*> inputs) {
  return common_tape(std::vector<const Tensor<Real>*>(inputs));
}

template <typename Real>
Tape<Real>* common_tape(const std::vector<const Tensor<Real>*>& inputs) {
  Tape<Real>* tape = nullptr;
  for (const auto* in : inputs) {
    if (!in->tape()) continue;
    if (tape && in->tape() != tape) throw ContractError("operands recorded on different tapes");
    tape = in->tape();
  }
  return tape;
}

template <typename Real>
Tensor<Real> detach(const Tensor<Real>& t) {
  return t.constant();
}

#define IMFA_INSTANTIATE(Real)                                                                      \
  template class Tensor<Real>;                                                                      \
  template class BackwardContext<Real>;                                                             \
  template class Gradients<Real>;                                                                   \
  template class Tape<Real>;                                                                        \
  template Tape<Real>* common_tape<Real>(std::initializer_list<const Tensor<Real>*>);              \
  template Tape<Real>* common_tape<Real>(const std::vector<const Tensor<Real>*>&);                 \
  template Tensor<Real> detach<Real>(const Tensor<Real>&);

IMFA_INSTANTIATE(float)
IMFA_INSTANTIATE(double)

}  // namespace imfa
