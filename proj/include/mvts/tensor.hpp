#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation: every
// result produced while gradients are enabled keeps references to its parents
// and a closure that pushes its gradient into them.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mvts {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

template <class Real>
class Tensor {
 public:
  using value_type = Real;
  using Node = TensorNode<Real>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  // Leaf mutation (initializers, optimizer updates). Never call on a tensor
  // that is part of a live graph.
  std::span<Real> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  Real item() const;

  /// Backpropagate from a one-element tensor (seed 1).
  void backward() const;

  /// Same values, no graph history, requires_grad off.
  Tensor detach() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

  /// Build a graph node. `backward_fn` is recorded only when gradients are
  /// enabled and some parent requires them.
  static Tensor from_op(Shape shape, std::vector<Real> data, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// RAII guard that disables graph construction on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mvts
