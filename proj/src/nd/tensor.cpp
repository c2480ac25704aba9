// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/nd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace edaq::nd {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::string describe_shapes(const std::vector<Shape>& shapes) {
  std::string s;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    s += (i ? " " : "") + to_string(shapes[i]);
  }
  return s;
}

}  // namespace

ShapeError::ShapeError(std::string op, std::vector<Shape> shapes, const std::string& detail)
    : std::invalid_argument(op + ": incompatible shapes " + describe_shapes(shapes) +
                            (detail.empty() ? "" : " (" + detail + ")")),
      op_(std::move(op)),
      shapes_(std::move(shapes)) {}

NumericError::NumericError(std::string op, const Shape& shape)
    : std::runtime_error(op + ": non-finite value in output of shape " + to_string(shape)),
      op_(std::move(op)) {}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto d : shape) {
    if (d < 0) throw ShapeError("tensor", {shape}, "negative dimension");
  }
  if (nd::numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor", {shape}, "data length " + std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  auto n = static_cast<std::size_t>(nd::numel(shape));
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor({}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw AutogradError("undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("dim", {s}, "axis " + std::to_string(axis));
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return nd::numel(shape()); }

std::span<const float> Tensor::data() const {
  if (!impl_) throw AutogradError("undefined tensor");
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw AutogradError("undefined tensor");
  if (impl_->node) throw AutogradError("mutable_data on a non-leaf tensor");
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", {shape()}, "expected one element");
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw AutogradError("undefined tensor");
  if (impl_->node) throw AutogradError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
  return *this;
}

bool Tensor::is_leaf() const noexcept { return impl_ && !impl_->node; }

std::span<const float> Tensor::grad() const {
  if (!impl_) throw AutogradError("undefined tensor");
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
  if (!impl_) throw AutogradError("undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data);
}

bool GradSink::wants(std::size_t i) const { return parents_.at(i).requires_grad(); }

std::span<float> GradSink::operator[](std::size_t i) {
  const Tensor& p = parents_.at(i);
  if (!p.requires_grad()) return {};
  return lookup_(p);
}

Tensor make_result(std::string_view op, Shape shape, std::vector<float> data,
                   std::vector<Tensor> parents, BackwardFn backward) {
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op), shape);
  }
  Tensor out(std::move(shape), std::move(data));
  const bool tracked = std::any_of(parents.begin(), parents.end(),
                                   [](const Tensor& p) { return p.requires_grad(); });
  if (tracked) {
    auto node = std::make_shared<detail::Node>();
    node->op = std::string(op);
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
  }
  return out;
}

void run_backward(const Tensor& loss) {
  if (!loss.defined()) throw AutogradError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw AutogradError("backward requires a scalar loss, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw AutogradError("backward on a loss with no trainable ancestry");
  }

  // Post-order DFS over tracked nodes; parents visited in index order so the
  // sweep order is a pure function of the graph.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  struct Frame {
    detail::TensorImpl* impl;
    std::size_t next;
  };
  std::vector<Frame> stack;
  if (loss.impl_->node) {
    stack.push_back({loss.impl_.get(), 0});
    seen.insert(loss.impl_.get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& parents = f.impl->node->parents;
    if (f.next < parents.size()) {
      detail::TensorImpl* p = parents[f.next++].impl_.get();
      if (p->requires_grad && p->node && seen.insert(p).second) {
        stack.push_back({p, 0});
      }
      continue;
    }
    order.push_back(f.impl);
    stack.pop_back();
  }

  std::unordered_map<const detail::TensorImpl*, std::vector<float>> interior;
  auto lookup = [&interior](const Tensor& t) -> std::span<float> {
    detail::TensorImpl* impl = t.impl_.get();
    if (!impl->node) {
      if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0f);
      return impl->grad;
    }
    auto& buf = interior[impl];
    if (buf.empty()) buf.assign(impl->data.size(), 0.0f);
    return buf;
  };

  if (!loss.impl_->node) {
    // Loss is itself a trainable leaf.
    auto g = lookup(loss);
    g[0] += 1.0f;
    return;
  }
  interior[loss.impl_.get()] = {1.0f};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    auto found = interior.find(impl);
    if (found == interior.end()) continue;
    std::vector<float> gout = std::move(found->second);
    interior.erase(found);
    GradSink sink(impl->node->parents, lookup);
    impl->node->backward(gout, sink);
  }
}

void Tensor::backward() const { run_backward(*this); }

}  // namespace edaq::nd
