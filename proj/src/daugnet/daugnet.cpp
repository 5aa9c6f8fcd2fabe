#include "daug/daugnet/daugnet.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "daug/nn/error.hpp"

namespace daug {

namespace {

constexpr int kDepth = 4;
constexpr int kBottleneck = 256;

template <typename Params, typename Fn>
void for_each_layer(Params& p, Fn fn) {
  for (int l = 0; l < kDepth; ++l) {
    for (int k = 0; k < 2; ++k) fn("down" + std::to_string(l) + "_" + std::to_string(k), p.down[l][k]);
  }
  for (int k = 0; k < 2; ++k) fn("bottleneck" + std::to_string(k), p.bottleneck[k]);
  for (int l = kDepth - 1; l >= 0; --l) {
    fn("up" + std::to_string(l), p.up[l]);
    for (int k = 0; k < 2; ++k) fn("merge" + std::to_string(l) + "_" + std::to_string(k), p.merge[l][k]);
  }
  fn(std::string("head"), p.head);
}

Var conv_in_relu(Tape& tape, const BoundConv& c, Var x) { return relu(tape, instance_norm(tape, apply(tape, c, x))); }

}  // namespace

ClassifierParams ClassifierParams::init(std::uint64_t seed) {
  Rng rng(seed);
  ClassifierParams p;
  const ConvSpec same{1, 1};
  int in = 3;
  for (int l = 0; l < kDepth; ++l) {
    p.down[l][0] = ConvLayer::init(in, kWidths[l], 3, same, rng);
    p.down[l][1] = ConvLayer::init(kWidths[l], kWidths[l], 3, same, rng);
    in = kWidths[l];
  }
  p.bottleneck[0] = ConvLayer::init(in, kBottleneck, 3, same, rng);
  p.bottleneck[1] = ConvLayer::init(kBottleneck, kBottleneck, 3, same, rng);
  in = kBottleneck;
  for (int l = kDepth - 1; l >= 0; --l) {
    p.up[l] = ConvLayer::init(in, kWidths[l], 3, same, rng);
    p.merge[l][0] = ConvLayer::init(2 * kWidths[l], kWidths[l], 3, same, rng);
    p.merge[l][1] = ConvLayer::init(kWidths[l], kWidths[l], 3, same, rng);
    in = kWidths[l];
  }
  p.head = ConvLayer::init(kWidths[0], kClassCount, 1, {1, 0}, rng);
  return p;
}

std::vector<NamedTensor> ClassifierParams::named_tensors(const std::string& prefix) {
  std::vector<NamedTensor> out;
  for_each_layer(*this, [&](const std::string& name, ConvLayer& layer) { append_named(out, prefix + "/" + name, layer); });
  return out;
}

std::size_t ClassifierParams::parameter_count() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const std::string&, const ConvLayer& layer) { n += layer.parameter_count(); });
  return n;
}

std::vector<Tensor4> BoundClassifier::grads(const Tape& tape) const {
  std::vector<Tensor4> out;
  for (const BoundConv& c : layers) append_grads(out, tape, c);
  return out;
}

BoundClassifier bind(Tape& tape, const ClassifierParams& params, bool trainable) {
  BoundClassifier b;
  for_each_layer(params, [&](const std::string&, const ConvLayer& layer) { b.layers.push_back(bind(tape, layer, trainable)); });
  return b;
}

Var classifier_forward(Tape& tape, const BoundClassifier& c, Var image) {
  const Shape4 s = tape.shape(image);
  if (s.c != 3) throw DimensionError("classifier expects 3-band images, got " + to_string(s));
  if (s.h <= 0 || s.w <= 0 || s.h % 16 != 0 || s.w % 16 != 0) {
    throw DimensionError("classifier input height and width must be multiples of 16, got " + to_string(s));
  }
  std::size_t i = 0;
  auto next = [&]() -> const BoundConv& { return c.layers.at(i++); };
  std::array<Var, kDepth> skips{};
  Var x = image;
  for (int l = 0; l < kDepth; ++l) {
    x = conv_in_relu(tape, next(), x);
    x = conv_in_relu(tape, next(), x);
    skips[static_cast<std::size_t>(l)] = x;
    x = max_pool2x2(tape, x);
  }
  x = conv_in_relu(tape, next(), x);
  x = conv_in_relu(tape, next(), x);
  for (int l = kDepth - 1; l >= 0; --l) {
    x = conv_in_relu(tape, next(), upsample_nn2x(tape, x));
    x = concat_channels(tape, skips[static_cast<std::size_t>(l)], x);
    x = conv_in_relu(tape, next(), x);
    x = conv_in_relu(tape, next(), x);
  }
  return apply(tape, next(), x);
}

Tensor4 classifier_forward(const Tensor4& image, const ClassifierParams& params) {
  Tape tape;
  const BoundClassifier c = bind(tape, params, false);
  return tape.value(classifier_forward(tape, c, tape.constant(image)));
}

AugmentResult augment_batch(const Tensor4& images, const DomainRegistry& registry, const GeneratorParams& generator,
                            Rng& rng, double prob) {
  if (registry.size() == 0) throw RegistryError("augment_batch: the style registry is empty");
  if (!(prob >= 0.0 && prob <= 1.0)) throw ValueError("augment_batch: probability must lie in [0,1]");
  AugmentResult out;
  out.diversified = rng.bernoulli(prob);
  if (!out.diversified) {
    out.images = images;
    return out;
  }
  std::vector<const StyleCode*> codes;
  for (int i = 0; i < images.n(); ++i) {
    const int h = static_cast<int>(rng.below(static_cast<std::uint64_t>(registry.size())));
    out.styles.push_back(h);
    codes.push_back(&registry.at(h).code);
  }
  const auto [gamma, beta] = stack_codes(codes);
  Tape tape;
  const BoundGenerator g = bind(tape, generator, false);
  out.images = tape.value(stylize(tape, g, tape.constant(images), gamma, beta));
  return out;
}

DAugBatch sample_daug_batch(const LabeledPatchSet& patches, std::span<const int> pool, const StyleCheckpoint& stage1,
                            double prob, int batch_size, Rng& rng) {
  if (pool.empty()) throw ValueError("sample_daug_batch: empty patch pool");
  DAugBatch out;
  std::vector<Tensor4> images, masks;
  for (int b = 0; b < batch_size; ++b) {
    const int idx = pool[rng.below(pool.size())];
    const LabeledPatch& p = patches.patches.at(static_cast<std::size_t>(idx));
    if (!p.labeled()) throw ValueError("sample_daug_batch: patch " + std::to_string(idx) + " has no mask");
    out.patch_indices.push_back(idx);
    images.push_back(p.image);
    masks.push_back(p.mask);
  }
  out.augment = augment_batch(stack_batch(images), stage1.registry, stage1.generator, rng, prob);
  for (int b = 0; b < batch_size; ++b) {
    const FlipRotateResult fr = random_flip_rotate(out.augment.images.sample(b), masks[static_cast<std::size_t>(b)], rng);
    out.transforms.push_back(fr.transform);
    images[static_cast<std::size_t>(b)] = fr.image;
    masks[static_cast<std::size_t>(b)] = fr.mask;
  }
  out.images = stack_batch(images);
  out.masks = stack_batch(masks);
  return out;
}

void DAugConfig::validate() const {
  if (!(diversify_prob >= 0.0 && diversify_prob <= 1.0)) throw ValueError("diversify_prob must lie in [0,1]");
  if (epochs < 1) throw ValueError("daugnet epochs must be at least 1");
  if (batch_size < 1) throw ValueError("daugnet batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("daugnet lr must be finite and >= 0");
  if (steps_per_epoch < 0) throw ValueError("steps_per_epoch must be >= 0");
  weights.validate();
}

ClassifierParams train_daugnet(const LabeledPatchSet& patches, const StyleCheckpoint& stage1, const DAugConfig& cfg,
                               const std::optional<ClassifierParams>& init, const DAugObserver& observer) {
  cfg.validate();
  std::vector<int> pool;
  for (std::size_t i = 0; i < patches.patches.size(); ++i) {
    const LabeledPatch& p = patches.patches[i];
    if (p.domain_id < 0 || p.domain_id >= stage1.registry.size()) {
      throw RegistryError("patch domain id " + std::to_string(p.domain_id) + " is not in the stage-1 checkpoint");
    }
    if (stage1.registry.at(p.domain_id).role == DomainRole::Source && p.labeled()) pool.push_back(static_cast<int>(i));
  }
  if (pool.empty()) throw ValueError("no labeled source patches to train the classifier on");

  ClassifierParams params = init ? *init : ClassifierParams::init(derive_seed(cfg.rng_seed, 0));
  Adam adam(AdamConfig{static_cast<float>(cfg.lr), 0.5f, 0.999f, 1e-8f});
  Rng rng(derive_seed(cfg.rng_seed, 1));
  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((pool.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                           static_cast<std::size_t>(cfg.batch_size));
  long long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (int s = 0; s < steps; ++s) {
      const DAugBatch batch = sample_daug_batch(patches, pool, stage1, cfg.diversify_prob, cfg.batch_size, rng);
      Tape tape;
      const BoundClassifier c = bind(tape, params, true);
      const Var logits = classifier_forward(tape, c, tape.constant(batch.images));
      const Var loss = classification_loss(tape, logits, batch.masks, cfg.weights);
      const double value = tape.value(loss).item();
      if (!std::isfinite(value)) throw ValueError("classification loss is not finite at step " + std::to_string(step));
      tape.backward(loss);
      std::vector<Tensor4*> ptrs;
      for (const NamedTensor& t : params.named_tensors()) ptrs.push_back(t.tensor);
      adam.step(ptrs, c.grads(tape));
      if (observer) observer({e, step, value, batch.augment.diversified});
      ++step;
    }
  }
  return params;
}

namespace {

Tensor4 reflect_pad(const Tensor4& x, int h, int w) {
  Tensor4 out({x.n(), x.c(), h, w});
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = x.at(n, c, reflect(y, x.h()), reflect(xx, x.w()));
  return out;
}

}  // namespace

Tensor4 predict_logits(const Tensor4& image, const ClassifierParams& params, int tile, int overlap) {
  if (image.n() != 1 || image.c() != 3) throw DimensionError("predict expects a (1,3,H,W) image, got " + to_string(image.shape()));
  if (tile <= 0 || tile % 16 != 0) throw ValueError("tile size must be a positive multiple of 16");
  const int h = std::max(image.h(), tile);
  const int w = std::max(image.w(), tile);
  const Tensor4 padded = (h == image.h() && w == image.w()) ? image : reflect_pad(image, h, w);
  const std::vector<int> ys = patch_anchors(h, tile, overlap);
  const std::vector<int> xs = patch_anchors(w, tile, overlap);
  Tensor4 sum({1, kClassCount, h, w});
  std::vector<float> hits(static_cast<std::size_t>(h) * w, 0.0f);
  for (const Patch& p : extract_patches(padded, tile, overlap)) {
    const Tensor4 logits = classifier_forward(p.data, params);
    for (int c = 0; c < kClassCount; ++c)
      for (int y = 0; y < tile; ++y)
        for (int x = 0; x < tile; ++x) sum.at(0, c, p.y + y, p.x + x) += logits.at(0, c, y, x);
    for (int y = 0; y < tile; ++y)
      for (int x = 0; x < tile; ++x) hits[static_cast<std::size_t>(p.y + y) * w + p.x + x] += 1.0f;
  }
  Tensor4 out({1, kClassCount, image.h(), image.w()});
  for (int c = 0; c < kClassCount; ++c)
    for (int y = 0; y < image.h(); ++y)
      for (int x = 0; x < image.w(); ++x) out.at(0, c, y, x) = sum.at(0, c, y, x) / hits[static_cast<std::size_t>(y) * w + x];
  return out;
}

Tensor4 predict_map(const Tensor4& image, const ClassifierParams& params, int tile, int overlap) {
  Tensor4 m = predict_logits(image, params, tile, overlap);
  for (float& v : m.data()) v = v > 0.0f ? 1.0f : 0.0f;
  return m;
}

TensorFile to_tensor_file(const ClassifierParams& params_in) {
  ClassifierParams params = params_in;
  TensorFile f;
  for (const NamedTensor& t : params.named_tensors()) f.tensors.emplace_back(t.name, *t.tensor);
  f.manifest = nlohmann::json{{"kind", "classifier"}, {"classes", {"building", "road", "tree"}}}.dump();
  return f;
}

ClassifierParams classifier_from_tensor_file(const TensorFile& file) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(file.manifest);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("classifier manifest is not valid: ") + e.what());
  }
  if (!manifest.contains("kind") || manifest["kind"] != "classifier") {
    throw FormatError("checkpoint does not hold a classifier");
  }
  ClassifierParams params = ClassifierParams::init(0);
  std::set<std::string> expected;
  for (const NamedTensor& t : params.named_tensors()) {
    expected.insert(t.name);
    const Tensor4* src = file.find(t.name);
    if (src == nullptr) throw FormatError("classifier checkpoint is missing tensor " + t.name);
    if (src->shape() != t.tensor->shape()) throw FormatError("tensor " + t.name + " has the wrong shape");
    *t.tensor = *src;
  }
  for (const auto& [name, t] : file.tensors) {
    if (!expected.count(name)) throw UnknownTensorError("classifier checkpoint holds unknown tensor " + name);
  }
  return params;
}

void save_classifier(const std::filesystem::path& path, const ClassifierParams& params) {
  write_tensor_file(path, to_tensor_file(params));
}

ClassifierParams load_classifier(const std::filesystem::path& path) {
  return classifier_from_tensor_file(read_tensor_file(path));
}

}  // namespace daug
