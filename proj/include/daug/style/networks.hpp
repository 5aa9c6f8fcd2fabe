#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "daug/nn/layers.hpp"
#include "daug/style/style_code.hpp"

namespace daug {

/// Shared encoder (six convolutions) and decoder (two convolutions).
///
/// Encoder: 3->32 k7 s1, 32->64 k4 s2, 64->128 k4 s2, then three 128->128 k3
/// layers. Every layer but the last is followed by instance norm and ReLU; the
/// last activation is left linear because AdaIN normalises it.
/// Decoder: [NN-up, 128->64 k5, layer norm, ReLU], [NN-up, 64->3 k5, tanh].
struct GeneratorParams {
  std::array<ConvLayer, 6> encoder;
  std::array<ConvLayer, 2> decoder;

  static GeneratorParams init(std::uint64_t seed);

  std::vector<NamedTensor> named_tensors(const std::string& prefix = "generator");
  std::size_t parameter_count() const;

  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct BoundGenerator {
  std::array<BoundConv, 6> encoder;
  std::array<BoundConv, 2> decoder;

  std::vector<Tensor4> grads(const Tape& tape) const;
};

BoundGenerator bind(Tape& tape, const GeneratorParams& params, bool trainable);

/// (N,3,H,W) image in [-1,1] -> (N,128,H/4,W/4) embedding.
Var encode(Tape& tape, const BoundGenerator& g, Var image);

/// (N,128,h,w) normalised embedding -> (N,3,4h,4w) image in [-1,1].
Var decode(Tape& tape, const BoundGenerator& g, Var embedding);

/// decode(adain(encode(image), gamma, beta)). gamma/beta are (1|N,128,1,1).
Var stylize(Tape& tape, const BoundGenerator& g, Var image, const Tensor4& gamma, const Tensor4& beta);

/// Inference-only stylisation of a batch with one code.
Tensor4 stylize(const Tensor4& image, const StyleCode& code, const GeneratorParams& params);

/// Discriminator: shared trunk plus one output head per registered domain.
///
/// Trunk: 3->64 k4 s2 + LReLU, 64->128 k4 s2 + IN + LReLU, 128->256 k4 s2 +
/// IN + LReLU. Head: 256->1 k4 s1 p1 + sigmoid.
struct DiscriminatorParams {
  std::array<ConvLayer, 3> trunk;
  std::vector<ConvLayer> heads;

  /// Trunk from `seed`; head i from head_seed(seed, i).
  static DiscriminatorParams init(std::uint64_t seed, int head_count);
  static ConvLayer init_head(std::uint64_t seed);
  static std::uint64_t head_seed(std::uint64_t seed, int head_id);

  std::vector<NamedTensor> named_tensors(const std::string& prefix = "discriminator");
  std::size_t trunk_parameter_count() const;
  std::size_t head_parameter_count() const;
  std::size_t parameter_count() const;

  friend bool operator==(const DiscriminatorParams&, const DiscriminatorParams&) = default;
};

struct BoundDiscriminator {
  std::array<BoundConv, 3> trunk;
  std::vector<BoundConv> heads;

  std::vector<Tensor4> grads(const Tape& tape) const;
};

BoundDiscriminator bind(Tape& tape, const DiscriminatorParams& params, bool trainable);

struct Discrimination {
  Var map;    // (N,1,h,w) sigmoid patch map
  Var score;  // (N,1,1,1) mean of the map per sample
};

/// Trunk followed by head `head_id`. Throws RegistryError for unknown heads.
Discrimination discriminate(Tape& tape, const BoundDiscriminator& d, Var image, int head_id);

/// Inference-only variant returning the map and the per-sample scores.
struct DiscriminationResult {
  Tensor4 map;
  Tensor4 score;
};
DiscriminationResult discriminate(const Tensor4& image, int head_id, const DiscriminatorParams& params);

/// Weights of the initial system.
struct StyleNetworks {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
};

/// Generator from derive_seed(seed, 0), discriminator from derive_seed(seed, 1)
/// with one head per registry entry.
StyleNetworks init_params(std::uint64_t seed, const DomainRegistry& registry);

/// Registers a new domain: fresh style code and a freshly initialised head,
/// both derived from `seed`. Existing codes, heads and the trunk are untouched.
int add_domain(DomainRegistry& registry, DiscriminatorParams& discriminator, const std::string& name, DomainRole role,
               std::uint64_t seed);

}  // namespace daug
