#include "daug/nn/layers.hpp"

#include <cmath>

namespace daug {

ConvLayer ConvLayer::init(int in_channels, int out_channels, int kernel, ConvSpec spec, Rng& rng) {
  ConvLayer layer{Tensor4({out_channels, in_channels, kernel, kernel}), Tensor4({1, out_channels, 1, 1}), spec};
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_channels * kernel * kernel));
  for (float& v : layer.weight.data()) v = rng.uniform(-bound, bound);
  return layer;
}

BoundConv bind(Tape& tape, const ConvLayer& layer, bool trainable) {
  if (trainable) return {tape.leaf(layer.weight), tape.leaf(layer.bias), layer.spec};
  return {tape.constant(layer.weight), tape.constant(layer.bias), layer.spec};
}

void append_named(std::vector<NamedTensor>& out, const std::string& prefix, ConvLayer& layer) {
  out.push_back({prefix + ".weight", &layer.weight});
  out.push_back({prefix + ".bias", &layer.bias});
}

void append_grads(std::vector<Tensor4>& out, const Tape& tape, const BoundConv& conv) {
  out.push_back(tape.grad(conv.weight));
  out.push_back(tape.grad(conv.bias));
}

}  // namespace daug
