#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "daug/data/patches.hpp"
#include "daug/losses/losses.hpp"
#include "daug/nn/adam.hpp"
#include "daug/nn/tensor_file.hpp"
#include "daug/style/networks.hpp"

namespace daug {

struct StyleTrainConfig {
  int num_epochs = 25;
  int decay_epoch = 15;
  double base_lr = 1e-4;
  int batch_size = 32;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  LossWeights weights;
  std::uint64_t rng_seed = 0;
  bool lifelong_mode = false;
  std::vector<int> new_domain_ids;  // lifelong only; empty = the ids armed in the checkpoint
  int steps_per_epoch = 0;          // 0 = ceil(patch count / batch size)

  /// Throws ValueError unless 0 < decay_epoch < num_epochs, batch_size >= 1,
  /// base_lr >= 0 and the loss weights are valid.
  void validate() const;
};

/// base_lr before decay_epoch, then a linear ramp reaching 0 at num_epochs.
double lr_at(int epoch, const StyleTrainConfig& cfg);

/// Two distinct head ids. Base mode: a uniform unordered pair over the whole
/// registry. Lifelong mode (non-empty `new_domains`): the first from the new
/// set, the second uniform over every other domain.
std::pair<int, int> sample_domain_pair(const DomainRegistry& registry, Rng& rng, std::span<const int> new_domains = {});

/// Everything stage 1 persists.
struct StyleCheckpoint {
  DomainRegistry registry;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  Adam generator_optimizer;
  Adam discriminator_optimizer;
  int epoch = 0;
  long long step = 0;
  std::vector<int> lifelong_domains;

  /// Fresh weights for `registry` from `seed`.
  static StyleCheckpoint initial(const DomainRegistry& registry, std::uint64_t seed, const StyleTrainConfig& cfg = {});
};

struct StyleBatch {
  Tensor4 a;
  Tensor4 b;
  int domain_a = 0;
  int domain_b = 0;
};

struct StyleStepReport {
  int domain_a = 0;
  int domain_b = 0;
  double d_adversarial = 0;
  double d_total = 0;
  double g_adversarial = 0;
  double cross = 0;
  double self = 0;
  double edge = 0;
  double g_total = 0;
};

/// The two halves of a step. Each updates only its own network.
void discriminator_update(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg,
                          StyleStepReport& report);
void generator_update(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg,
                      StyleStepReport& report);

/// One discriminator update on real a/b against detached fakes (heads a and b
/// only), then one generator update. Style codes are never touched.
StyleStepReport train_style_step(StyleCheckpoint& state, const StyleBatch& batch, const StyleTrainConfig& cfg);

/// `batch_size` patches of each domain, drawn uniformly with replacement.
StyleBatch sample_style_batch(const LabeledPatchSet& set, const std::vector<std::vector<int>>& by_domain, int domain_a,
                              int domain_b, int batch_size, Rng& rng);

using StyleObserver = std::function<void(int epoch, const StyleStepReport&)>;

/// Continues training `state` for cfg.num_epochs epochs on `set`.
void train_style(StyleCheckpoint& state, const LabeledPatchSet& set, const StyleTrainConfig& cfg,
                 const StyleObserver& observer = {});

/// Fresh weights from cfg.rng_seed, then train_style.
StyleCheckpoint train_style(const LabeledPatchSet& set, const DomainRegistry& registry, const StyleTrainConfig& cfg,
                            const StyleObserver& observer = {});

/// Appends new domains (code and head from derive_seed(seed, i)) without
/// touching any existing parameter or optimizer moment, and arms lifelong
/// sampling on them. New heads get fresh optimizer state.
StyleCheckpoint extend_for_lifelong(const StyleCheckpoint& old,
                                    std::span<const std::pair<std::string, DomainRole>> new_domains,
                                    std::uint64_t seed);

TensorFile to_tensor_file(const StyleCheckpoint& ckpt);
StyleCheckpoint from_tensor_file(const TensorFile& file);

void save_checkpoint(const std::filesystem::path& path, const StyleCheckpoint& ckpt);
StyleCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace daug
