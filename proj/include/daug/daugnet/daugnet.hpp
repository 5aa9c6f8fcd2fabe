#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "daug/data/patches.hpp"
#include "daug/losses/losses.hpp"
#include "daug/nn/tensor_file.hpp"
#include "daug/train/style_trainer.hpp"

namespace daug {

/// U-net segmentation classifier.
///
/// Four encoder levels of widths 32, 64, 128, 256 (two 3x3 conv + IN + ReLU
/// each, 2x2 max-pool after each), a 256-wide bottleneck at 1/16 resolution,
/// and four decoder levels (NN-upsample, 3x3 conv + IN + ReLU, concatenation
/// with the matching encoder level, two 3x3 conv + IN + ReLU). A 1x1 conv maps
/// to one logit per class.
struct ClassifierParams {
  static constexpr std::array<int, 4> kWidths{32, 64, 128, 256};

  std::array<std::array<ConvLayer, 2>, 4> down;
  std::array<ConvLayer, 2> bottleneck;
  std::array<ConvLayer, 4> up;
  std::array<std::array<ConvLayer, 2>, 4> merge;
  ConvLayer head;

  static ClassifierParams init(std::uint64_t seed);

  std::vector<NamedTensor> named_tensors(const std::string& prefix = "classifier");
  std::size_t parameter_count() const;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// Layers in named_tensors order.
struct BoundClassifier {
  std::vector<BoundConv> layers;

  std::vector<Tensor4> grads(const Tape& tape) const;
};

BoundClassifier bind(Tape& tape, const ClassifierParams& params, bool trainable);

/// (N,3,H,W) -> (N,3,H,W) logits; H and W must be positive multiples of 16.
Var classifier_forward(Tape& tape, const BoundClassifier& c, Var image);
Tensor4 classifier_forward(const Tensor4& image, const ClassifierParams& params);

struct AugmentResult {
  Tensor4 images;
  bool diversified = false;
  std::vector<int> styles;  // head id per patch when diversified
};

/// With probability `prob` restyles every patch toward an independently,
/// uniformly drawn registered domain; otherwise returns the batch unchanged.
/// The generator runs in inference mode only.
AugmentResult augment_batch(const Tensor4& images, const DomainRegistry& registry, const GeneratorParams& generator,
                            Rng& rng, double prob);

struct DAugConfig {
  double diversify_prob = 0.9;
  int epochs = 1;
  double lr = 1e-4;
  int batch_size = 32;
  LossWeights weights;
  std::uint64_t rng_seed = 0;
  int steps_per_epoch = 0;  // 0 = ceil(labeled source patches / batch size)

  void validate() const;
};

/// One classifier training batch and how it was made.
struct DAugBatch {
  std::vector<int> patch_indices;
  AugmentResult augment;        // images after the augmentor
  std::vector<int> transforms;  // dihedral index per patch
  Tensor4 images;               // after flips/rotations
  Tensor4 masks;                // the original masks under the same flips/rotations
};

/// Draws `batch_size` patches from `pool` (indices into `patches`) with
/// replacement, diversifies them and applies a random flip/rotation per pair.
DAugBatch sample_daug_batch(const LabeledPatchSet& patches, std::span<const int> pool, const StyleCheckpoint& stage1,
                            double prob, int batch_size, Rng& rng);

struct DAugStepReport {
  int epoch = 0;
  long long step = 0;
  double loss = 0;
  bool diversified = false;
};

using DAugObserver = std::function<void(const DAugStepReport&)>;

/// Trains the classifier on labeled source patches. Each step samples a
/// batch, passes it through augment_batch, applies a random flip/rotation to
/// every (image, mask) pair and takes one Adam step on the classification
/// loss. `init` warm-starts from existing weights. The stage-1 checkpoint is
/// read only.
ClassifierParams train_daugnet(const LabeledPatchSet& patches, const StyleCheckpoint& stage1, const DAugConfig& cfg,
                               const std::optional<ClassifierParams>& init = std::nullopt,
                               const DAugObserver& observer = {});

/// Averaged logits of overlapping tiles. Inputs smaller than the tile are
/// reflect-padded at the bottom/right first and cropped back afterwards.
Tensor4 predict_logits(const Tensor4& image, const ClassifierParams& params, int tile = 256, int overlap = 32);

/// predict_logits thresholded at sigmoid 0.5 (logit > 0) into a {0,1} mask.
Tensor4 predict_map(const Tensor4& image, const ClassifierParams& params, int tile = 256, int overlap = 32);

TensorFile to_tensor_file(const ClassifierParams& params);
ClassifierParams classifier_from_tensor_file(const TensorFile& file);
void save_classifier(const std::filesystem::path& path, const ClassifierParams& params);
ClassifierParams load_classifier(const std::filesystem::path& path);

}  // namespace daug
