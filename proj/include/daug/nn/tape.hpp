#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "daug/nn/tensor.hpp"

namespace daug {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Records forward values and the closures that propagate gradients back.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order. A node only keeps its backward closure
/// when at least one input requires a gradient; frozen sub-graphs therefore
/// cost nothing on the way back.
class Tape {
 public:
  /// Receives the gradient of the node's output; adds into its inputs' grads.
  using BackwardFn = std::function<void(Tape&, const Tensor4& out_grad)>;

  /// A value that never receives a gradient.
  Var constant(Tensor4 value);
  /// A value whose gradient is tracked (parameter or probe input).
  Var leaf(Tensor4 value);

  /// Appends an op output. `fn` is dropped when no input requires a gradient.
  Var record(Tensor4 value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor4& value(Var v) const { return nodes_[v.id].value; }
  const Shape4& shape(Var v) const { return nodes_[v.id].value.shape(); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulated by the last backward(); zeros if never reached.
  Tensor4 grad(Var v) const;

  /// Mutable gradient buffer of `v`, zero-initialised on first access.
  Tensor4& grad_buffer(Var v);

  /// Reverse sweep from a one-element output seeded with gradient 1.
  void backward(Var output);

  /// Reverse sweep seeded with an arbitrary upstream gradient for `output`.
  void backward(Var output, const Tensor4& seed);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace daug
