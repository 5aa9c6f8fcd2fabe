#include "daug/style/networks.hpp"

#include "daug/nn/error.hpp"

namespace daug {


GeneratorParams GeneratorParams::init(std::uint64_t seed) {
  Rng rng(seed);
  GeneratorParams g;
  g.encoder[0] = ConvLayer::init(3, 32, 7, {1, 3}, rng);
  g.encoder[1] = ConvLayer::init(32, 64, 4, {2, 1}, rng);
  g.encoder[2] = ConvLayer::init(64, 128, 4, {2, 1}, rng);
  for (int i = 3; i < 6; ++i) g.encoder[static_cast<std::size_t>(i)] = ConvLayer::init(128, 128, 3, {1, 1}, rng);
  g.decoder[0] = ConvLayer::init(kEmbeddingChannels, 64, 5, {1, 2}, rng);
  g.decoder[1] = ConvLayer::init(64, 3, 5, {1, 2}, rng);
  return g;
}

std::vector<NamedTensor> GeneratorParams::named_tensors(const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) append_named(out, prefix + "/encoder" + std::to_string(i), encoder[i]);
  for (std::size_t i = 0; i < decoder.size(); ++i) append_named(out, prefix + "/decoder" + std::to_string(i), decoder[i]);
  return out;
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : encoder) n += l.parameter_count();
  for (const auto& l : decoder) n += l.parameter_count();
  return n;
}

std::vector<Tensor4> BoundGenerator::grads(const Tape& tape) const {
  std::vector<Tensor4> out;
  for (const auto& l : encoder) append_grads(out, tape, l);
  for (const auto& l : decoder) append_grads(out, tape, l);
  return out;
}

BoundGenerator bind(Tape& tape, const GeneratorParams& params, bool trainable) {
  BoundGenerator g;
  for (std::size_t i = 0; i < params.encoder.size(); ++i) g.encoder[i] = bind(tape, params.encoder[i], trainable);
  for (std::size_t i = 0; i < params.decoder.size(); ++i) g.decoder[i] = bind(tape, params.decoder[i], trainable);
  return g;
}

Var encode(Tape& tape, const BoundGenerator& g, Var image) {
  const Shape4 s = tape.shape(image);
  if (s.c != 3) throw DimensionError("encode: expected 3-band images, got " + to_string(s));
  if (s.h % 4 != 0 || s.w % 4 != 0 || s.h == 0 || s.w == 0) {
    throw DimensionError("encode: H and W must be positive multiples of 4, got " + to_string(s));
  }
  Var x = image;
  for (std::size_t i = 0; i < 5; ++i) x = relu(tape, instance_norm(tape, apply(tape, g.encoder[i], x)));
  return apply(tape, g.encoder[5], x);
}

Var decode(Tape& tape, const BoundGenerator& g, Var embedding) {
  const Shape4 s = tape.shape(embedding);
  if (s.c != kEmbeddingChannels) {
    throw DimensionError("decode: expected " + std::to_string(kEmbeddingChannels) + " embedding channels, got " +
                         to_string(s));
  }
  Var x = upsample_nn2x(tape, embedding);
  x = relu(tape, layer_norm(tape, apply(tape, g.decoder[0], x)));
  x = upsample_nn2x(tape, x);
  return daug::tanh(tape, apply(tape, g.decoder[1], x));
}

Var stylize(Tape& tape, const BoundGenerator& g, Var image, const Tensor4& gamma, const Tensor4& beta) {
  return decode(tape, g, adain(tape, encode(tape, g, image), gamma, beta));
}

Tensor4 stylize(const Tensor4& image, const StyleCode& code, const GeneratorParams& params) {
  Tape tape;
  const BoundGenerator g = bind(tape, params, false);
  return tape.value(stylize(tape, g, tape.constant(image), code.gamma_tensor(), code.beta_tensor()));
}

DiscriminatorParams DiscriminatorParams::init(std::uint64_t seed, int head_count) {
  Rng rng(seed);
  DiscriminatorParams d;
  d.trunk[0] = ConvLayer::init(3, 64, 4, {2, 1}, rng);
  d.trunk[1] = ConvLayer::init(64, 128, 4, {2, 1}, rng);
  d.trunk[2] = ConvLayer::init(128, 256, 4, {2, 1}, rng);
  for (int i = 0; i < head_count; ++i) d.heads.push_back(init_head(head_seed(seed, i)));
  return d;
}

ConvLayer DiscriminatorParams::init_head(std::uint64_t seed) {
  Rng rng(seed);
  return ConvLayer::init(256, 1, 4, {1, 1}, rng);
}

std::uint64_t DiscriminatorParams::head_seed(std::uint64_t seed, int head_id) {
  return derive_seed(seed, 1000 + static_cast<std::uint64_t>(head_id));
}

std::vector<NamedTensor> DiscriminatorParams::named_tensors(const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < trunk.size(); ++i) append_named(out, prefix + "/trunk" + std::to_string(i), trunk[i]);
  for (std::size_t i = 0; i < heads.size(); ++i) append_named(out, prefix + "/head" + std::to_string(i), heads[i]);
  return out;
}

std::size_t DiscriminatorParams::trunk_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : trunk) n += l.parameter_count();
  return n;
}

std::size_t DiscriminatorParams::head_parameter_count() const {
  return static_cast<std::size_t>(256 * 4 * 4 + 1);
}

std::size_t DiscriminatorParams::parameter_count() const {
  std::size_t n = trunk_parameter_count();
  for (const auto& h : heads) n += h.parameter_count();
  return n;
}

std::vector<Tensor4> BoundDiscriminator::grads(const Tape& tape) const {
  std::vector<Tensor4> out;
  for (const auto& l : trunk) append_grads(out, tape, l);
  for (const auto& l : heads) append_grads(out, tape, l);
  return out;
}

BoundDiscriminator bind(Tape& tape, const DiscriminatorParams& params, bool trainable) {
  BoundDiscriminator d;
  for (std::size_t i = 0; i < params.trunk.size(); ++i) d.trunk[i] = bind(tape, params.trunk[i], trainable);
  for (const auto& h : params.heads) d.heads.push_back(bind(tape, h, trainable));
  return d;
}

Discrimination discriminate(Tape& tape, const BoundDiscriminator& d, Var image, int head_id) {
  if (head_id < 0 || head_id >= static_cast<int>(d.heads.size())) {
    throw RegistryError("discriminate: head id " + std::to_string(head_id) + " is not registered (" +
                        std::to_string(d.heads.size()) + " heads)");
  }
  const Shape4 s = tape.shape(image);
  if (s.c != 3) throw DimensionError("discriminate: expected 3-band images, got " + to_string(s));
  Var x = leaky_relu(tape, apply(tape, d.trunk[0], image));
  x = leaky_relu(tape, instance_norm(tape, apply(tape, d.trunk[1], x)));
  x = leaky_relu(tape, instance_norm(tape, apply(tape, d.trunk[2], x)));
  const Var map = sigmoid(tape, apply(tape, d.heads[static_cast<std::size_t>(head_id)], x));
  return {map, spatial_mean(tape, map)};
}

DiscriminationResult discriminate(const Tensor4& image, int head_id, const DiscriminatorParams& params) {
  Tape tape;
  const BoundDiscriminator d = bind(tape, params, false);
  const Discrimination out = discriminate(tape, d, tape.constant(image), head_id);
  return {tape.value(out.map), tape.value(out.score)};
}

StyleNetworks init_params(std::uint64_t seed, const DomainRegistry& registry) {
  return {GeneratorParams::init(derive_seed(seed, 0)), DiscriminatorParams::init(derive_seed(seed, 1), registry.size())};
}

int add_domain(DomainRegistry& registry, DiscriminatorParams& discriminator, const std::string& name, DomainRole role,
               std::uint64_t seed) {
  if (static_cast<int>(discriminator.heads.size()) != registry.size()) {
    throw RegistryError("discriminator holds " + std::to_string(discriminator.heads.size()) + " heads but registry " +
                        std::to_string(registry.size()) + " domains");
  }
  const int id = registry.add(name, role, derive_seed(seed, 0));
  discriminator.heads.push_back(DiscriminatorParams::init_head(derive_seed(seed, 1)));
  return id;
}

}  // namespace daug
