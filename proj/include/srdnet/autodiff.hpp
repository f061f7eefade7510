#pragma once

#include <unordered_map>
#include <vector>

#include "srdnet/detail/node.hpp"
#include "srdnet/tensor.hpp"

namespace srdnet {

/// Gradients of a scalar loss with respect to every requires_grad leaf that
/// the loss depends on.
class Gradients {
 public:
  /// Null when `leaf` did not take part in the loss.
  const Vector* find(const Tensor& leaf) const;
  /// Gradient of `leaf`, or zeros of its shape when it did not take part.
  Vector of(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const void*, Vector> grads_;
};

/// Topologically ordered record of the graph under a root. Built per forward
/// pass; the graph itself lives in the tensors.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  /// Nodes that require a gradient, inputs before consumers.
  const std::vector<const detail::Node*>& order() const { return order_; }
  Gradients backward() const;

 private:
  Tensor root_;
  std::vector<const detail::Node*> order_;
};

/// Reverse-mode sweep from a 0-d loss. Throws UsageError on a non-scalar.
Gradients backward(const Tensor& loss);

}  // namespace srdnet
