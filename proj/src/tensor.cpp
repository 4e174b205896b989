// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/tensor.hpp"

#include <unordered_set>
#include <utility>

#include "getnet/error.hpp"

namespace getnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<detail::Node<T>>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "shape " + shape_str(shape) + " does not hold " +
                    std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::NotScalar, "item() on tensor " + shape_str(shape()));
  }
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this sweep; only leaves accumulate.
  for (NodeT* node : order) {
    if (node->backward_fn) node->grad.clear();
  }
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward_fn && node->grad.size() == node->data.size()) {
      node->backward_fn(*node);
      std::vector<T>().swap(node->grad);
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> detail::make_result(Shape, std::vector<float>,
                                           std::initializer_list<Tensor<float>>,
                                           std::function<void(detail::Node<float>&)>);
template Tensor<double> detail::make_result(Shape, std::vector<double>,
                                            std::initializer_list<Tensor<double>>,
                                            std::function<void(detail::Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace getnet
