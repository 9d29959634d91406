#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ssltsc/core/tensor.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::nn {

/// One vertex of the dynamically built computation graph.
template <typename T>
struct Node {
  using Ptr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(const Tensor<T>& grad, const std::vector<Ptr>& parents)>;

  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<Ptr> parents;
  BackwardFn backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
template <typename T>
class Var {
 public:
  using NodePtr = typename Node<T>::Ptr;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var leaf(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  T item() const { return node_->value[0]; }
  const NodePtr& node() const noexcept { return node_; }

  /// Gradient accumulated by the last backward pass (zeros if none reached).
  const Tensor<T>& grad() const { return node_->grad_buffer(); }

  /// Reverse-mode sweep from a scalar node.
  void backward() const {
    if (node_->value.size() != 1) throw InternalError("backward() requires a scalar output");
    if (!node_->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, bool>> stack{{node_.get(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(n);
        continue;
      }
      if (!seen.insert(n).second) continue;
      stack.emplace_back(n, true);
      for (const auto& p : n->parents) {
        if (p->requires_grad && !seen.count(p.get())) stack.emplace_back(p.get(), false);
      }
    }

    node_->grad_buffer()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(n->grad, n->parents);
    }
  }

 private:
  NodePtr node_;
};

/// Creates the output node of an operation. The backward closure is only
/// attached when some parent participates in differentiation.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, typename Node<T>::BackwardFn fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

/// Trainable tensor with value semantics: copying a Parameter copies its
/// value into a fresh graph leaf, so copied models never alias.
template <typename T>
class Parameter {
 public:
  Parameter() : node_(std::make_shared<Node<T>>()) { node_->requires_grad = true; }
  explicit Parameter(Tensor<T> init) : Parameter() { node_->value = std::move(init); }

  Parameter(const Parameter& other) : Parameter(other.node_->value) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      node_ = std::make_shared<Node<T>>();
      node_->requires_grad = true;
      node_->value = other.node_->value;
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  /// Graph leaf tracked by backward().
  Var<T> var() const { return Var<T>(node_); }
  /// Constant snapshot of the value; gradients never reach this parameter.
  Var<T> detached() const { return Var<T>::constant(node_->value); }

  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& grad() { return node_->grad_buffer(); }
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  void zero_grad() { node_->grad_buffer().fill(T{0}); }

 private:
  std::shared_ptr<Node<T>> node_;
};

}  // namespace ssltsc::nn
