// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace ide {

namespace {
thread_local bool g_grad_enabled = true;
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}
}  // namespace

template <typename S>
Tensor<S> Tensor<S>::zeros(const Shape& shape) {
  return constant(shape, S(0));
}

template <typename S>
Tensor<S> Tensor<S>::constant(const Shape& shape, S value) {
  check_shape(shape);
  auto node = std::make_shared<Node<S>>();
  node->shape = shape;
  node->value = Array::Constant(numel(shape), value);
  return Tensor(std::move(node));
}

template <typename S>
Tensor<S> Tensor<S>::from_array(const Shape& shape, Array values) {
  check_shape(shape);
  if (values.size() != numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         to_string(shape));
  }
  auto node = std::make_shared<Node<S>>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename S>
Tensor<S> Tensor<S>::from_vector(const Shape& shape, const std::vector<S>& values) {
  Array a = Eigen::Map<const Array>(values.data(), static_cast<Index>(values.size()));
  return from_array(shape, std::move(a));
}

template <typename S>
Index Tensor<S>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename S>
S Tensor<S>::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

template <typename S>
S Tensor<S>::at(std::initializer_list<Index> index) const {
  if (static_cast<int>(index.size()) != rank()) throw DimensionError("index rank mismatch");
  Index offset = 0;
  int axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= node_->shape[axis]) throw DimensionError("index out of range");
    offset = offset * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[offset];
}

template <typename S>
Tensor<S>& Tensor<S>::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
  return *this;
}

template <typename S>
Tensor<S> Tensor<S>::detach() const {
  return from_array(shape(), value());
}

template <typename S>
Tensor<S> make_result(Shape shape, typename Node<S>::Array value, const std::vector<Tensor<S>>& inputs,
                      const char* op, std::function<void(const Node<S>&)> backward) {
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const auto& t : inputs) node->parents.push_back(t.node());
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor<S>(std::move(node));
}

template <typename S>
Tensor<S> make_result(Shape shape, typename Node<S>::Array value, std::initializer_list<Tensor<S>> inputs,
                      const char* op, std::function<void(const Node<S>&)> backward) {
  return make_result<S>(std::move(shape), std::move(value), std::vector<Tensor<S>>(inputs), op,
                        std::move(backward));
}

template <typename S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss does not depend on any tensor that requires grad");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<S>* node : order) {
    if (!node->is_leaf()) node->grad = Node<S>::Array::Zero(node->value.size());
  }
  loss.node()->grad_buffer()[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    if (!node->is_leaf()) node->backward_fn(*node);
  }
}

#define IDE_INSTANTIATE(S)                                                                              \
  template class Tensor<S>;                                                                             \
  template Tensor<S> make_result<S>(Shape, Node<S>::Array, const std::vector<Tensor<S>>&, const char*,  \
                                    std::function<void(const Node<S>&)>);                               \
  template Tensor<S> make_result<S>(Shape, Node<S>::Array, std::initializer_list<Tensor<S>>, const char*, \
                                    std::function<void(const Node<S>&)>);                               \
  template void backward<S>(const Tensor<S>&);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
