#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "minclip/common.hpp"

namespace minclip {

// Thread-local switch: when disabled, ops skip graph construction entirely
// (evaluation path). Mirrors the usual grad-mode idiom.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
};

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
  }
};

// Value-semantics handle onto a shared autodiff node. Scalar type S is float
// for training and double for the reference/grad-check path.
template <typename S>
class TensorT {
 public:
  using Node = TensorNode<S>;

  TensorT() : node_(std::make_shared<Node>()) {}

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    TensorT t;
    t.node_->shape = std::move(shape);
    t.node_->data.assign(static_cast<size_t>(shape_numel(t.node_->shape)), S(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT full(Shape shape, S value, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
  }

  static TensorT from_data(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
      throw ShapeMismatch("from_data: shape " + shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
    }
    TensorT t;
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(S value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  std::vector<S>& data() { return node_->data; }
  const std::vector<S>& data() const { return node_->data; }

  const std::vector<S>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  S item() const {
    if (numel() != 1) throw ShapeMismatch("item: tensor is not scalar");
    return node_->data[0];
  }

  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse-mode sweep from a scalar root. Topological order is a post-order
  // DFS over the parent links; each node is visited exactly once.
  void backward() const {
    if (numel() != 1) throw NonScalarRoot("backward: root must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (!visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  // Detached copy of the values (no graph linkage).
  TensorT detach_copy(bool requires_grad = false) const {
    return from_data(node_->shape, node_->data, requires_grad);
  }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

}  // namespace minclip
