// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace edaq::nd {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible with an op.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, std::vector<Shape> shapes, const std::string& detail = {});
  const std::string& op() const noexcept { return op_; }
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }

 private:
  std::string op_;
  std::vector<Shape> shapes_;
};

/// Raised when an op produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const Shape& shape);
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Misuse of the autograd machinery (non-scalar loss, detached loss, ...).
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tensor;
class GradSink;

/// Backward closure of a recorded op. Receives dL/d(output) and adds
/// dL/d(parent) into the buffers handed out by the sink.
using BackwardFn = std::function<void(std::span<const float> grad_out, GradSink& sink)>;

namespace detail {
struct Node;
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};
}  // namespace detail

/// Dense row-major float32 tensor. Copies are shallow handles; data is
/// immutable once produced by an op, only leaves may be written in place.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const float> data() const;
  /// Writable view; only valid on leaves (parameters and inputs).
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const noexcept;

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Constant copy of the values, cut from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Reverse-mode sweep from this scalar; accumulates into trainable leaves.
  void backward() const;

  const void* id() const noexcept { return impl_.get(); }

 private:
  friend class GradSink;
  friend Tensor make_result(std::string_view, Shape, std::vector<float>, std::vector<Tensor>,
                            BackwardFn);
  friend void run_backward(const Tensor&);
  std::shared_ptr<detail::TensorImpl> impl_;
};

class GradSink {
 public:
  /// Zero-initialised gradient buffer of parent `i`, or an empty span when
  /// that parent does not need a gradient.
  std::span<float> operator[](std::size_t i);
  bool wants(std::size_t i) const;

 private:
  friend void run_backward(const Tensor&);
  GradSink(const std::vector<Tensor>& parents,
           std::function<std::span<float>(const Tensor&)> lookup)
      : parents_(parents), lookup_(std::move(lookup)) {}
  const std::vector<Tensor>& parents_;
  std::function<std::span<float>(const Tensor&)> lookup_;
};

/// Build an op output. Records a graph node when any parent requires grad;
/// otherwise the result is a constant. Throws NumericError on NaN/Inf.
Tensor make_result(std::string_view op, Shape shape, std::vector<float> data,
                   std::vector<Tensor> parents, BackwardFn backward);

void run_backward(const Tensor& loss);

namespace detail {
struct Node {
  std::string op;
  std::vector<Tensor> parents;
  BackwardFn backward;
};
}  // namespace detail

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace edaq::nd
