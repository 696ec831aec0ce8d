#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "microsim/numeric/error.hpp"

namespace microsim {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

inline void check_finite(std::span<const double> xs, std::string_view what) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << xs[i] << " at flat index " << i;
      throw NumericError(os.str());
    }
  }
}

}  // namespace detail

/// Dense row-major array of doubles with optional reverse-mode gradient.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values are
/// treated as immutable once an operation has consumed them. The only
/// sanctioned in-place writes are optimizer updates on leaf parameters
/// through `mutable_values()`.
class Tensor {
 public:
  Tensor() : Tensor(Shape{1}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " elements but " +
                       std::to_string(values.size()) + " values were given");
    }
    detail::check_finite(values, "tensor construction");
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false)
      : Tensor(std::move(shape), std::vector<double>(values), requires_grad) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 1.0, requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  double operator[](std::size_t i) const { return node_->values[i]; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->values[0];
  }

  /// In-place access for optimizer updates. Only valid on leaves.
  std::span<double> mutable_values() {
    if (!node_->is_leaf()) throw std::logic_error("mutable_values() on a non-leaf tensor");
    return node_->values;
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw std::logic_error("requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const {
    return has_grad() ? node_->grad : std::vector<double>(size(), 0.0);
  }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no graph, no gradient requirement.
  Tensor detach() const { return Tensor(shape(), node_->values); }

  /// Runs reverse accumulation from this scalar with seed 1.
  void backward() const {
    if (size() != 1) {
      throw ShapeError("backward() without seed requires a scalar, got " + shape_string(shape()));
    }
    backward(std::vector<double>{1.0});
  }

  /// Runs reverse accumulation with an explicit output seed of the same length.
  void backward(std::span<const double> seed) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

inline void Tensor::backward(std::span<const double> seed) const {
  if (seed.size() != size()) throw ShapeError("backward seed length does not match tensor size");
  if (!node_->requires_grad) return;

  // Post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior buffers restart from zero so that repeated backward calls on the
  // same graph only accumulate into leaves.
  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
  }
  auto& g = node_->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf()) {
      n->backward(*n);
    }
  }
  for (auto* n : order) {
    if (n->is_leaf() && !n->grad.empty()) detail::check_finite(n->grad, "gradient");
  }
}

namespace detail {

/// Builds the result node of an operation. The backward closure is attached
/// only when at least one input requires a gradient.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  check_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

/// Gradient buffer of parent `i`, or nullptr when that parent does not need one.
inline double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

}  // namespace detail

}  // namespace microsim
