#pragma once

#include "daug/nn/ops.hpp"

namespace daug {

/// Probability clamp applied before every log in the adversarial losses.
inline constexpr float kProbClamp = 1e-7f;

/// Relative weights of the training objectives.
///
/// style stage: adversarial, cross reconstruction, self reconstruction, edge.
/// classification stage: sigmoid cross-entropy and soft-IoU.
struct LossWeights {
  float adversarial = 1.0f;
  float cross = 10.0f;
  float self = 10.0f;
  float edge = 100.0f;
  float cross_entropy = 0.25f;
  float soft_iou = 0.75f;

  /// Throws ValueError if any weight is negative or non-finite.
  void validate() const;
};

/// The eight images of one two-domain style step. All share one shape.
///
/// fake_a = stylize(a, S_b), self_a = stylize(a, S_a),
/// cross_a = stylize(fake_a, S_a); symmetrically for b.
struct StylePairBundle {
  Var a, b;
  Var fake_a, fake_b;
  Var self_a, self_b;
  Var cross_a, cross_b;
};

/// -[mean log D(real) + mean log(1 - D(fake))] over the batch.
Var d_adv_loss(Tape& tape, Var score_real, Var score_fake);
double d_adv_loss(double score_real, double score_fake);

/// -mean log D(fake).
Var g_adv_loss(Tape& tape, Var score_fake);
double g_adv_loss(double score_fake);

/// mean|a - cross_a| + mean|b - cross_b|.
Var cross_recon_loss(Tape& tape, const StylePairBundle& bundle);

/// mean|a - self_a| + mean|b - self_b|.
Var self_recon_loss(Tape& tape, const StylePairBundle& bundle);

/// Sobel edge discrepancy of (a, fake_a) plus (b, fake_b).
Var edge_loss(Tape& tape, const StylePairBundle& bundle);

struct GeneratorTerms {
  Var adversarial;
  Var cross;
  Var self;
  Var edge;
};

/// Weighted sum of the generator terms. A zero weight drops its term from the
/// graph entirely. Throws ValueError naming the first non-finite term.
Var generator_objective(Tape& tape, const GeneratorTerms& terms, const LossWeights& weights);
double generator_objective(double adversarial, double cross, double self, double edge, const LossWeights& weights);

/// weights.adversarial * adv_d; throws ValueError if adv_d is not finite.
Var discriminator_objective(Tape& tape, Var adv_d, const LossWeights& weights);
double discriminator_objective(double adv_d, const LossWeights& weights);

/// Multi-label segmentation loss on raw logits.
///
/// weights.cross_entropy * mean sigmoid cross-entropy (per pixel, per class)
/// + weights.soft_iou * (1 - mean_c (sum p*y + 1) / (sum (p + y - p*y) + 1)),
/// with p = sigmoid(logits) and sums over batch and pixels of class c.
/// Targets must be binary and match the logits' shape.
Var classification_loss(Tape& tape, Var logits, const Tensor4& targets, const LossWeights& weights);

}  // namespace daug
