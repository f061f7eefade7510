#include "srdnet/autodiff.hpp"

#include <unordered_set>

namespace srdnet {

const Vector* Gradients::find(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  return it == grads_.end() ? nullptr : &it->second;
}

Vector Gradients::of(const Tensor& leaf) const {
  if (const Vector* g = find(leaf)) return *g;
  return Vector::Zero(leaf.size());
}

Tape::Tape(const Tensor& root) : root_(root) {
  // Iterative post-order DFS; graphs are deep enough to make recursion risky.
  std::unordered_set<const detail::Node*> visited;
  struct Frame {
    const detail::Node* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  const detail::Node* r = node_of(root).get();
  if (!r->requires_grad) return;
  stack.push_back({r, 0});
  visited.insert(r);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      const detail::Node* in = f.node->inputs[f.next_input++].get();
      if (in->requires_grad && visited.insert(in).second) stack.push_back({in, 0});
    } else {
      order_.push_back(f.node);
      stack.pop_back();
    }
  }
}

Gradients Tape::backward() const {
  Gradients out;
  if (order_.empty()) return out;
  std::unordered_map<const detail::Node*, Vector> buffers;
  buffers.reserve(order_.size());
  buffers[order_.back()] = Vector::Ones(1);

  std::vector<Vector*> sinks;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const detail::Node* node = *it;
    auto found = buffers.find(node);
    if (found == buffers.end()) continue;  // unreachable from the root's gradient
    if (node->inputs.empty()) {
      out.grads_.emplace(node, std::move(found->second));
      buffers.erase(found);
      continue;
    }
    sinks.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const detail::Node* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      auto [slot, fresh] = buffers.try_emplace(in);
      if (fresh) slot->second = Vector::Zero(in->value.size());
      sinks[i] = &slot->second;
    }
    // try_emplace may rehash and invalidate `found`.
    const Vector grad = std::move(buffers.at(node));
    buffers.erase(node);
    node->backward(grad, detail::GradSinks(sinks.data(), sinks.size()));
  }
  return out;
}

Gradients backward(const Tensor& loss) {
  if (loss.size() != 1 || loss.rank() != 0) {
    throw UsageError("backward needs a 0-d loss, got shape " + to_string(loss.shape()));
  }
  return Tape(loss).backward();
}

}  // namespace srdnet
