#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "srdnet/tensor.hpp"

namespace srdnet::detail {

/// Gradient buffers of a node's inputs, in input order; null where the input
/// does not require a gradient. Backward rules accumulate into them.
using GradSinks = std::span<Vector* const>;
using BackwardFn = std::function<void(const Vector& grad, GradSinks inputs)>;

struct Node {
  Shape shape;
  Vector value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

/// Builds the node for an op result. Inputs and the backward rule are kept
/// only when some input requires a gradient.
Tensor make_result(const char* op, Shape shape, Vector value,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_result(const char* op, Shape shape, Vector value,
                   std::span<const Tensor> inputs, BackwardFn backward);

}  // namespace srdnet::detail
