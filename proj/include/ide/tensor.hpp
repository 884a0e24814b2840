// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ide {

using Index = std::int64_t;
using Shape = std::vector<Index>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Tape recording is on by default; NoGradGuard turns it off for the current
// thread (inference, sampling, metric extraction).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename S>
struct Node {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  Array grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(const Node&)> backward_fn;

  Array& grad_buffer() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
  }
  bool is_leaf() const { return !backward_fn; }
};

/// Dense row-major tensor handle. Copies share the underlying node; values are
/// treated as immutable once an op has consumed them, except through
/// `value_mut()` on leaves (parameter updates, initialization).
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Array = typename Node<S>::Array;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor constant(const Shape& shape, S value);
  static Tensor from_array(const Shape& shape, Array values);
  static Tensor from_vector(const Shape& shape, const std::vector<S>& values);
  static Tensor scalar(S value) { return constant({1}, value); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  const Array& value() const { return node_->value; }
  Array& value_mut() { return node_->value; }
  const S* data() const { return node_->value.data(); }
  S item() const;
  S at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Array& grad() const { return node_->grad; }
  Array& grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Array(); }

  // New leaf sharing no history with this tensor.
  Tensor detach() const;

  template <typename T>
  Tensor<T> cast() const {
    return Tensor<T>::from_array(shape(), value().template cast<T>());
  }

  const std::shared_ptr<Node<S>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// Builds a result node; records `backward` on the tape only when grad mode is
// on and at least one input requires a gradient.
template <typename S>
Tensor<S> make_result(Shape shape, typename Node<S>::Array value,
                      std::initializer_list<Tensor<S>> inputs, const char* op,
                      std::function<void(const Node<S>&)> backward);

template <typename S>
Tensor<S> make_result(Shape shape, typename Node<S>::Array value,
                      const std::vector<Tensor<S>>& inputs, const char* op,
                      std::function<void(const Node<S>&)> backward);

/// Reverse-mode sweep from a scalar loss. Interior gradients are reset at the
/// start of every call; leaf gradients accumulate additively until zeroed.
template <typename S>
void backward(const Tensor<S>& loss);

}  // namespace ide
