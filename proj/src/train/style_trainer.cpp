#include "daug/train/style_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "daug/nn/error.hpp"

namespace daug {

using nlohmann::json;

void StyleTrainConfig::validate() const {
  if (num_epochs < 1 || decay_epoch <= 0 || decay_epoch >= num_epochs) {
    throw ValueError("style config: need 0 < decay_epoch < num_epochs, got decay_epoch=" + std::to_string(decay_epoch) +
                     " num_epochs=" + std::to_string(num_epochs));
  }
  if (batch_size < 1) throw ValueError("style config: batch_size must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ValueError("style config: base_lr must be finite and >= 0");
  if (steps_per_epoch < 0) throw ValueError("style config: steps_per_epoch must be >= 0");
  weights.validate();
}

double lr_at(int epoch, const StyleTrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.num_epochs) {
    throw ValueError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.num_epochs) + "]");
  }
  if (epoch < cfg.decay_epoch) return cfg.base_lr;
  const double remaining = static_cast<double>(cfg.num_epochs - epoch);
  const double span = static_cast<double>(cfg.num_epochs - cfg.decay_epoch);
  return cfg.base_lr * (remaining / span);
}

std::pair<int, int> sample_domain_pair(const DomainRegistry& registry, Rng& rng, std::span<const int> new_domains) {
  const int n = registry.size();
  if (n < 2) throw RegistryError("pair sampling needs at least two domains, registry has " + std::to_string(n));
  int first = 0;
  if (new_domains.empty()) {
    first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  } else {
    first = new_domains[rng.below(new_domains.size())];
    if (first < 0 || first >= n) throw RegistryError("lifelong domain id " + std::to_string(first) + " not registered");
  }
  int second = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
  if (second >= first) ++second;
  return {first, second};
}

StyleCheckpoint StyleCheckpoint::initial(const DomainRegistry& registry, std::uint64_t seed,
                                         const StyleTrainConfig& cfg) {
  const StyleNetworks nets = init_params(seed, registry);
  const AdamConfig adam{static_cast<float>(cfg.base_lr), cfg.beta1, cfg.beta2, 1e-8f};
  return StyleCheckpoint{registry, nets.generator, nets.discriminator, Adam(adam), Adam(adam), 0, 0, {}};
}

namespace {

std::vector<Tensor4*> parameter_list(std::vector<NamedTensor> named) {
  std::vector<Tensor4*> out;
  for (const NamedTensor& t : named) out.push_back(t.tensor);
  return out;
}

double scalar(const Tape& tape, Var v) { return static_cast<double>(tape.value(v).item()); }

}  // namespace

namespace {

struct PairCodes {
  Tensor4 ga, ba, gb, bb;
};

PairCodes pair_codes(const StyleCheckpoint& state, const StyleBatch& batch) {
  if (batch.domain_a == batch.domain_b) {
    throw ValueError("style step needs two distinct domains, got head " + std::to_string(batch.domain_a) + " twice");
  }
  const StyleCode& a = state.registry.at(batch.domain_a).code;
  const StyleCode& b = state.registry.at(batch.domain_b).code;
  return {a.gamma_tensor(), a.beta_tensor(), b.gamma_tensor(), b.beta_tensor()};
}

}  // namespace

void discriminator_update(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg,
                          StyleStepReport& report) {
  const PairCodes c = pair_codes(state, batch);
  const int ha = batch.domain_a;
  const int hb = batch.domain_b;
  Tape tape;
  const BoundGenerator g = bind(tape, state.generator, false);
  const BoundDiscriminator d = bind(tape, state.discriminator, true);
  const Var a = tape.constant(batch.a);
  const Var b = tape.constant(batch.b);
  const Var fake_a = detach(tape, stylize(tape, g, a, c.gb, c.bb));
  const Var fake_b = detach(tape, stylize(tape, g, b, c.ga, c.ba));
  const Var adv = add(tape, d_adv_loss(tape, discriminate(tape, d, b, hb).score, discriminate(tape, d, fake_a, hb).score),
                      d_adv_loss(tape, discriminate(tape, d, a, ha).score, discriminate(tape, d, fake_b, ha).score));
  const Var total = discriminator_objective(tape, adv, cfg.weights);
  tape.backward(total);
  std::vector<Tensor4> grads = d.grads(tape);
  // Heads outside the pair sit the step out entirely.
  const std::size_t trunk_tensors = 2 * state.discriminator.trunk.size();
  for (int h = 0; h < static_cast<int>(state.discriminator.heads.size()); ++h) {
    if (h == ha || h == hb) continue;
    grads[trunk_tensors + 2 * static_cast<std::size_t>(h)] = Tensor4();
    grads[trunk_tensors + 2 * static_cast<std::size_t>(h) + 1] = Tensor4();
  }
  const std::vector<Tensor4*> params = parameter_list(state.discriminator.named_tensors());
  state.discriminator_optimizer.step(params, grads);
  report.d_adversarial = scalar(tape, adv);
  report.d_total = scalar(tape, total);
}

void generator_update(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg,
                      StyleStepReport& report) {
  const PairCodes c = pair_codes(state, batch);
  Tape tape;
  const BoundGenerator g = bind(tape, state.generator, true);
  const BoundDiscriminator d = bind(tape, state.discriminator, false);
  const Var a = tape.constant(batch.a);
  const Var b = tape.constant(batch.b);
  const Var ea = encode(tape, g, a);
  const Var eb = encode(tape, g, b);
  StylePairBundle bundle;
  bundle.a = a;
  bundle.b = b;
  bundle.fake_a = decode(tape, g, adain(tape, ea, c.gb, c.bb));
  bundle.fake_b = decode(tape, g, adain(tape, eb, c.ga, c.ba));
  bundle.self_a = decode(tape, g, adain(tape, ea, c.ga, c.ba));
  bundle.self_b = decode(tape, g, adain(tape, eb, c.gb, c.bb));
  bundle.cross_a = stylize(tape, g, bundle.fake_a, c.ga, c.ba);
  bundle.cross_b = stylize(tape, g, bundle.fake_b, c.gb, c.bb);
  GeneratorTerms terms;
  terms.adversarial = add(tape, g_adv_loss(tape, discriminate(tape, d, bundle.fake_a, batch.domain_b).score),
                          g_adv_loss(tape, discriminate(tape, d, bundle.fake_b, batch.domain_a).score));
  terms.cross = cross_recon_loss(tape, bundle);
  terms.self = self_recon_loss(tape, bundle);
  terms.edge = edge_loss(tape, bundle);
  const Var total = generator_objective(tape, terms, cfg.weights);
  tape.backward(total);
  const std::vector<Tensor4*> params = parameter_list(state.generator.named_tensors());
  state.generator_optimizer.step(params, g.grads(tape));
  report.g_adversarial = scalar(tape, terms.adversarial);
  report.cross = scalar(tape, terms.cross);
  report.self = scalar(tape, terms.self);
  report.edge = scalar(tape, terms.edge);
  report.g_total = scalar(tape, total);
}

StyleStepReport train_style_step(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg) {
  StyleStepReport report;
  report.domain_a = batch.domain_a;
  report.domain_b = batch.domain_b;
  discriminator_update(state, batch, cfg, report);
  generator_update(state, batch, cfg, report);
  ++state.step;
  return report;
}

StyleBatch sample_style_batch(const LabeledPatchSet& set, const std::vector<std::vector<int>>& by_domain, int domain_a,
                              int domain_b, int batch_size, Rng& rng) {
  auto draw = [&](int domain) {
    const std::vector<int>& pool = by_domain.at(static_cast<std::size_t>(domain));
    if (pool.empty()) throw ValueError("domain " + std::to_string(domain) + " has no patches");
    std::vector<Tensor4> items;
    items.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
      items.push_back(set.patches[static_cast<std::size_t>(pool[rng.below(pool.size())])].image);
    }
    return stack_batch(items);
  };
  StyleBatch batch;
  batch.domain_a = domain_a;
  batch.domain_b = domain_b;
  batch.a = draw(domain_a);
  batch.b = draw(domain_b);
  return batch;
}

void train_style(StyleCheckpoint& state, const LabeledPatchSet& set, const StyleTrainConfig& cfg,
                 const StyleObserver& observer) {
  cfg.validate();
  const int n = state.registry.size();
  std::vector<std::vector<int>> by_domain(static_cast<std::size_t>(n));
  for (int d = 0; d < n; ++d) {
    by_domain[static_cast<std::size_t>(d)] = set.indices_of(d);
    if (by_domain[static_cast<std::size_t>(d)].empty()) {
      throw ValueError("domain " + state.registry.at(d).name + " has no patches");
    }
  }
  std::vector<int> lifelong;
  if (cfg.lifelong_mode) {
    lifelong = cfg.new_domain_ids.empty() ? state.lifelong_domains : cfg.new_domain_ids;
    if (lifelong.empty()) throw ValueError("lifelong mode requires at least one new domain");
  }
  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((set.patches.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                           static_cast<std::size_t>(cfg.batch_size));
  Rng rng(derive_seed(cfg.rng_seed, 0x5354594cULL + static_cast<std::uint64_t>(state.step)));
  for (int e = 0; e < cfg.num_epochs; ++e) {
    const float lr = static_cast<float>(lr_at(e, cfg));
    state.generator_optimizer.set_lr(lr);
    state.discriminator_optimizer.set_lr(lr);
    state.generator_optimizer.set_betas(cfg.beta1, cfg.beta2);
    state.discriminator_optimizer.set_betas(cfg.beta1, cfg.beta2);
    for (int s = 0; s < steps; ++s) {
      const auto [da, db] = sample_domain_pair(state.registry, rng, lifelong);
      const StyleBatch batch = sample_style_batch(set, by_domain, da, db, cfg.batch_size, rng);
      const StyleStepReport report = train_style_step(state, batch, cfg);
      if (observer) observer(e, report);
    }
    ++state.epoch;
  }
}

StyleCheckpoint train_style(const LabeledPatchSet& set, const DomainRegistry& registry, const StyleTrainConfig& cfg,
                            const StyleObserver& observer) {
  cfg.validate();
  StyleCheckpoint state = StyleCheckpoint::initial(registry, cfg.rng_seed, cfg);
  train_style(state, set, cfg, observer);
  return state;
}

StyleCheckpoint extend_for_lifelong(const StyleCheckpoint& old,
                                    std::span<const std::pair<std::string, DomainRole>> new_domains,
                                    std::uint64_t seed) {
  if (new_domains.empty()) throw ValueError("extension needs at least one new domain");
  std::set<std::string> fresh;
  for (const auto& [name, role] : new_domains) {
    if (old.registry.contains(name) || !fresh.insert(name).second) {
      throw RegistryError("domain name '" + name + "' is already registered");
    }
  }
  StyleCheckpoint out = old;
  out.lifelong_domains.clear();
  std::vector<Shape4> added;
  for (std::size_t i = 0; i < new_domains.size(); ++i) {
    const int id = add_domain(out.registry, out.discriminator, new_domains[i].first, new_domains[i].second,
                              derive_seed(seed, i));
    out.lifelong_domains.push_back(id);
    const ConvLayer& head = out.discriminator.heads[static_cast<std::size_t>(id)];
    added.push_back(head.weight.shape());
    added.push_back(head.bias.shape());
  }
  out.discriminator_optimizer.extend(added);
  return out;
}

namespace {

std::string code_name(const std::string& domain, const char* part) { return "codes/" + domain + "/" + part; }

json optimizer_manifest(const Adam& adam) {
  return {{"steps", adam.step_count()}, {"tensor_steps", adam.tensor_steps()}};
}

void append_optimizer(TensorFile& file, const std::string& prefix, std::vector<NamedTensor> named, const Adam& adam) {
  if (adam.first_moments().empty()) return;
  if (adam.first_moments().size() != named.size()) {
    throw DimensionError("optimizer state for " + prefix + " does not match its parameter list");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    file.tensors.emplace_back("optimizer/" + prefix + "/m/" + named[i].name, adam.first_moments()[i]);
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    file.tensors.emplace_back("optimizer/" + prefix + "/v/" + named[i].name, adam.second_moments()[i]);
  }
}

}  // namespace

TensorFile to_tensor_file(const StyleCheckpoint& ckpt_in) {
  StyleCheckpoint ckpt = ckpt_in;
  TensorFile file;
  const auto gen = ckpt.generator.named_tensors();
  const auto disc = ckpt.discriminator.named_tensors();
  for (const NamedTensor& t : gen) file.tensors.emplace_back(t.name, *t.tensor);
  for (const NamedTensor& t : disc) file.tensors.emplace_back(t.name, *t.tensor);
  json domains = json::array();
  for (const DomainEntry& e : ckpt.registry.entries()) {
    file.tensors.emplace_back(code_name(e.name, "gamma"), e.code.gamma_tensor());
    file.tensors.emplace_back(code_name(e.name, "beta"), e.code.beta_tensor());
    domains.push_back({{"name", e.name},
                       {"role", to_string(e.role)},
                       {"head_id", e.head_id},
                       {"gamma", code_name(e.name, "gamma")},
                       {"beta", code_name(e.name, "beta")}});
  }
  append_optimizer(file, "generator", gen, ckpt.generator_optimizer);
  append_optimizer(file, "discriminator", disc, ckpt.discriminator_optimizer);
  const json manifest = {{"kind", "style"},
                         {"epoch", ckpt.epoch},
                         {"step", ckpt.step},
                         {"domains", domains},
                         {"lifelong_domains", ckpt.lifelong_domains},
                         {"optimizers",
                          {{"generator", optimizer_manifest(ckpt.generator_optimizer)},
                           {"discriminator", optimizer_manifest(ckpt.discriminator_optimizer)}}}};
  file.manifest = manifest.dump();
  return file;
}

namespace {

class TensorLookup {
 public:
  explicit TensorLookup(const TensorFile& file) : file_(file) {}

  const Tensor4& take(const std::string& name, const Shape4& shape) {
    const Tensor4* t = file_.find(name);
    if (t == nullptr) throw FormatError("checkpoint is missing tensor " + name);
    if (t->shape() != shape) {
      throw FormatError("tensor " + name + " has shape " + to_string(t->shape()) + ", expected " + to_string(shape));
    }
    used_.insert(name);
    return *t;
  }

  void load_into(std::vector<NamedTensor> named) {
    for (NamedTensor& t : named) *t.tensor = take(t.name, t.tensor->shape());
  }

  void check_all_used() const {
    for (const auto& [name, t] : file_.tensors) {
      if (!used_.count(name)) throw UnknownTensorError("checkpoint holds unknown tensor " + name);
    }
  }

 private:
  const TensorFile& file_;
  std::set<std::string> used_;
};

void restore_optimizer(Adam& adam, TensorLookup& lookup, const std::string& prefix, std::vector<NamedTensor> named,
                       const json& meta) {
  const long long steps = meta.at("steps").get<long long>();
  std::vector<long long> tensor_steps = meta.at("tensor_steps").get<std::vector<long long>>();
  if (tensor_steps.empty()) return;
  if (tensor_steps.size() != named.size()) {
    throw FormatError("optimizer " + prefix + ": step list does not match the parameter list");
  }
  std::vector<Tensor4> m, v;
  for (const NamedTensor& t : named) m.push_back(lookup.take("optimizer/" + prefix + "/m/" + t.name, t.tensor->shape()));
  for (const NamedTensor& t : named) v.push_back(lookup.take("optimizer/" + prefix + "/v/" + t.name, t.tensor->shape()));
  adam.restore(steps, std::move(tensor_steps), std::move(m), std::move(v));
}

}  // namespace

StyleCheckpoint from_tensor_file(const TensorFile& file) {
  json manifest;
  try {
    manifest = json::parse(file.manifest);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid: ") + e.what());
  }
  try {
    if (manifest.at("kind").get<std::string>() != "style") throw FormatError("checkpoint does not hold a style model");
    TensorLookup lookup(file);
    StyleCheckpoint ckpt;
    const auto& domains = manifest.at("domains");
    for (std::size_t i = 0; i < domains.size(); ++i) {
      const auto& d = domains[i];
      if (d.at("head_id").get<int>() != static_cast<int>(i)) {
        throw FormatError("manifest head ids must follow domain order");
      }
      const Shape4 code_shape{1, kEmbeddingChannels, 1, 1};
      const Tensor4& gamma = lookup.take(d.at("gamma").get<std::string>(), code_shape);
      const Tensor4& beta = lookup.take(d.at("beta").get<std::string>(), code_shape);
      ckpt.registry.add(d.at("name").get<std::string>(), parse_role(d.at("role").get<std::string>()),
                        StyleCode::from_values(gamma.data(), beta.data()));
    }
    ckpt.generator = GeneratorParams::init(0);
    ckpt.discriminator = DiscriminatorParams::init(0, ckpt.registry.size());
    lookup.load_into(ckpt.generator.named_tensors());
    lookup.load_into(ckpt.discriminator.named_tensors());
    const auto& opt = manifest.at("optimizers");
    restore_optimizer(ckpt.generator_optimizer, lookup, "generator", ckpt.generator.named_tensors(),
                      opt.at("generator"));
    restore_optimizer(ckpt.discriminator_optimizer, lookup, "discriminator", ckpt.discriminator.named_tensors(),
                      opt.at("discriminator"));
    lookup.check_all_used();
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.step = manifest.at("step").get<long long>();
    ckpt.lifelong_domains = manifest.at("lifelong_domains").get<std::vector<int>>();
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is incomplete: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const StyleCheckpoint& ckpt) {
  write_tensor_file(path, to_tensor_file(ckpt));
}

StyleCheckpoint load_checkpoint(const std::filesystem::path& path) { return from_tensor_file(read_tensor_file(path)); }

}  // namespace daug
