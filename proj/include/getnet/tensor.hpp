// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace getnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One recorded value in the autograd graph. Non-leaf nodes hold their
/// parents and a closure that pushes `grad` into the parents' grads.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Unlinks long parent chains iteratively; the default recursive release
  // overflows the stack on deep graphs. Closures are dropped first, while
  // `parents` still keeps every captured node alive.
  ~Node() {
    backward_fn = nullptr;
    std::vector<std::shared_ptr<Node>> pending = std::move(parents);
    while (!pending.empty()) {
      std::shared_ptr<Node> n = std::move(pending.back());
      pending.pop_back();
      if (n.use_count() == 1) {
        n->backward_fn = nullptr;
        for (auto& q : n->parents) pending.push_back(std::move(q));
        n->parents.clear();
      }
    }
  }

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor handle with reverse-mode gradient support.
/// Copies share the underlying node, like a reference-counted view.
/// T is float for normal forwards and double for gradient checking.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place writes bypass the graph; only use on leaves (parameters,
  /// finite-difference probes).
  std::span<T> mutable_data() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  T item() const;
  T operator[](std::size_t i) const { return node_->data[i]; }

  /// Fresh leaf with a copy of the values and no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

/// Creates an op result. `backward` is recorded only when some parent
/// requires grad; otherwise the result is a plain constant.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward);

}  // namespace detail

/// Reverse-mode sweep from a scalar. Leaf grads accumulate (sum over
/// fan-out and over repeated calls); throws Error{NotScalar}.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace getnet
