#include "daug/nn/tape.hpp"

#include "daug/nn/error.hpp"

namespace daug {

Var Tape::constant(Tensor4 value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor4 value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor4 value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return Var{nodes_.size() - 1};
}

Tensor4 Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.grad.empty()) return Tensor4(node.value.shape());
  return node.grad;
}

Tensor4& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id];
  if (node.grad.empty()) node.grad = Tensor4(node.value.shape());
  return node.grad;
}

void Tape::backward(Var output) {
  if (nodes_[output.id].value.size() != 1) {
    throw DimensionError("backward() needs a one-element output, got shape " +
                         to_string(nodes_[output.id].value.shape()));
  }
  backward(output, Tensor4::scalar(1.0f));
}

void Tape::backward(Var output, const Tensor4& seed) {
  if (seed.shape() != nodes_[output.id].value.shape()) {
    throw DimensionError("backward seed shape " + to_string(seed.shape()) + " does not match output " +
                         to_string(nodes_[output.id].value.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor4();
  nodes_[output.id].grad = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    // Closures only touch grads of earlier nodes; nodes_ does not reallocate here.
    node.backward(*this, node.grad);
  }
}

}  // namespace daug
