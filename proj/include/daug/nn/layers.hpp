#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daug/nn/ops.hpp"
#include "daug/nn/rng.hpp"

namespace daug {

/// Weights of one convolution: (Cout, Cin, k, k) kernel and (1, Cout, 1, 1) bias.
struct ConvLayer {
  Tensor4 weight;
  Tensor4 bias;
  ConvSpec spec;

  /// Kernel uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero bias.
  static ConvLayer init(int in_channels, int out_channels, int kernel, ConvSpec spec, Rng& rng);

  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// A ConvLayer placed on a tape.
struct BoundConv {
  Var weight;
  Var bias;
  ConvSpec spec;
};

/// Places the layer on the tape; trainable layers become gradient leaves.
BoundConv bind(Tape& tape, const ConvLayer& layer, bool trainable);

inline Var apply(Tape& tape, const BoundConv& conv, Var x) { return conv2d(tape, x, conv.weight, conv.bias, conv.spec); }

/// Name/tensor pairs in a fixed order; the order defines optimizer slots and
/// checkpoint layout.
struct NamedTensor {
  std::string name;
  Tensor4* tensor;
};

/// Appends `<prefix>.weight` and `<prefix>.bias`.
void append_named(std::vector<NamedTensor>& out, const std::string& prefix, ConvLayer& layer);

/// Gradient of every bound layer, in binding order.
void append_grads(std::vector<Tensor4>& out, const Tape& tape, const BoundConv& conv);

}  // namespace daug
