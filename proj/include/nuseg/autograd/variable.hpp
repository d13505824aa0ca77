#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nuseg/core/tensor.hpp"

namespace nuseg {

template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<VarNode<T>>> parents;
  std::function<void(VarNode<T>&)> backprop;

  void accumulate_grad(const Tensor<T>& g) {
    if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
    const T* src = g.data();
    T* dst = grad.data();
    const int64_t n = grad.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
  }

  Tensor<T>& grad_buffer() {
    if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
};

namespace detail {
inline thread_local int nograd_depth = 0;
}

/// Disables graph recording in the current thread for its lifetime.
struct NoGradGuard {
  NoGradGuard() { ++detail::nograd_depth; }
  ~NoGradGuard() { --detail::nograd_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::nograd_depth == 0; }

/// Handle to a node of the dynamically recorded computation graph. Ops build
/// new Variables from inputs; recording happens only while grad is enabled and
/// at least one input requires grad.
template <typename T>
class Variable {
 public:
  Variable() = default;

  static Variable leaf(Tensor<T> value, bool requires_grad = false) {
    Variable v;
    v.node_ = std::make_shared<VarNode<T>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad;
    return v;
  }

  /// Builds an op result. `backprop` reads this node's grad and accumulates
  /// into the inputs; it is dropped entirely when recording is off.
  static Variable op(Tensor<T> value, std::vector<Variable> inputs,
                     std::function<void(VarNode<T>&)> backprop) {
    Variable v = leaf(std::move(value), false);
    if (!grad_enabled()) return v;
    bool any = false;
    for (const Variable& in : inputs) any = any || in.requires_grad();
    if (!any) return v;
    v.node_->requires_grad = true;
    v.node_->parents.reserve(inputs.size());
    for (Variable& in : inputs) v.node_->parents.push_back(in.node_);
    v.node_->backprop = std::move(backprop);
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }
  std::shared_ptr<VarNode<T>> node() const { return node_; }

  T item() const {
    if (value().numel() != 1) throw std::logic_error("Variable::item: tensor is not scalar");
    return value()[0];
  }

 private:
  std::shared_ptr<VarNode<T>> node_;
};

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and runs
/// every recorded backprop in reverse topological order.
template <typename T>
void backward(const Variable<T>& root) {
  if (!root.defined() || root.value().numel() != 1)
    throw std::logic_error("backward: root must be a defined scalar");
  if (!root.requires_grad()) return;

  std::vector<VarNode<T>*> order;
  std::unordered_set<VarNode<T>*> seen;
  // Iterative DFS postorder; recursion would overflow on deep graphs.
  std::vector<std::pair<VarNode<T>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      VarNode<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    VarNode<T>* node = *it;
    if (node->backprop && node->grad.defined()) node->backprop(*node);
  }
}

}  // namespace nuseg
