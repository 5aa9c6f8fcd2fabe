#include "daug/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "daug/nn/error.hpp"

namespace daug {

namespace {

double clamp_prob(double p) { return std::clamp(p, static_cast<double>(kProbClamp), 1.0 - kProbClamp); }

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw ValueError(std::string("non-finite loss term: ") + term);
}

void require_bundle_shapes(const Tape& tape, const StylePairBundle& b) {
  const Shape4 s = tape.shape(b.a);
  for (Var v : {b.b, b.fake_a, b.fake_b, b.self_a, b.self_b, b.cross_a, b.cross_b}) {
    if (tape.shape(v) != s) {
      throw DimensionError("style bundle tensors must share one shape: " + to_string(s) + " vs " +
                           to_string(tape.shape(v)));
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  const std::pair<const char*, float> all[] = {{"adversarial", adversarial}, {"cross", cross},
                                               {"self", self},               {"edge", edge},
                                               {"cross_entropy", cross_entropy}, {"soft_iou", soft_iou}};
  for (const auto& [name, v] : all) {
    if (!std::isfinite(v) || v < 0.0f) throw ValueError(std::string("loss weight ") + name + " must be >= 0");
  }
}

Var d_adv_loss(Tape& tape, Var score_real, Var score_fake) {
  const Var real_term = mean_all(tape, clamped_log(tape, score_real, kProbClamp, 1.0f - kProbClamp));
  const Var fake_term = mean_all(tape, clamped_log(tape, one_minus(tape, score_fake), kProbClamp, 1.0f - kProbClamp));
  return scale(tape, add(tape, real_term, fake_term), -1.0f);
}

double d_adv_loss(double score_real, double score_fake) {
  return -(std::log(clamp_prob(score_real)) + std::log(1.0 - clamp_prob(score_fake)));
}

Var g_adv_loss(Tape& tape, Var score_fake) {
  return scale(tape, mean_all(tape, clamped_log(tape, score_fake, kProbClamp, 1.0f - kProbClamp)), -1.0f);
}

double g_adv_loss(double score_fake) { return -std::log(clamp_prob(score_fake)); }

Var cross_recon_loss(Tape& tape, const StylePairBundle& b) {
  require_bundle_shapes(tape, b);
  return add(tape, mean_abs_diff(tape, b.a, b.cross_a), mean_abs_diff(tape, b.b, b.cross_b));
}

Var self_recon_loss(Tape& tape, const StylePairBundle& b) {
  require_bundle_shapes(tape, b);
  return add(tape, mean_abs_diff(tape, b.a, b.self_a), mean_abs_diff(tape, b.b, b.self_b));
}

Var edge_loss(Tape& tape, const StylePairBundle& b) {
  require_bundle_shapes(tape, b);
  return add(tape, sobel_l1(tape, b.a, b.fake_a), sobel_l1(tape, b.b, b.fake_b));
}

Var generator_objective(Tape& tape, const GeneratorTerms& terms, const LossWeights& weights) {
  weights.validate();
  const std::pair<const char*, Var> named[] = {
      {"adversarial", terms.adversarial}, {"cross", terms.cross}, {"self", terms.self}, {"edge", terms.edge}};
  for (const auto& [name, v] : named) require_finite(tape.value(v).item(), name);
  Var total = scale(tape, terms.adversarial, weights.adversarial);
  total = add(tape, total, scale(tape, terms.cross, weights.cross));
  total = add(tape, total, scale(tape, terms.self, weights.self));
  if (weights.edge != 0.0f) total = add(tape, total, scale(tape, terms.edge, weights.edge));
  return total;
}

double generator_objective(double adversarial, double cross, double self, double edge, const LossWeights& weights) {
  weights.validate();
  require_finite(adversarial, "adversarial");
  require_finite(cross, "cross");
  require_finite(self, "self");
  require_finite(edge, "edge");
  double total = weights.adversarial * adversarial + weights.cross * cross + weights.self * self;
  if (weights.edge != 0.0f) total += weights.edge * edge;
  return total;
}

Var discriminator_objective(Tape& tape, Var adv_d, const LossWeights& weights) {
  weights.validate();
  require_finite(tape.value(adv_d).item(), "discriminator adversarial");
  return scale(tape, adv_d, weights.adversarial);
}

double discriminator_objective(double adv_d, const LossWeights& weights) {
  weights.validate();
  require_finite(adv_d, "discriminator adversarial");
  return weights.adversarial * adv_d;
}

Var classification_loss(Tape& tape, Var logits, const Tensor4& targets, const LossWeights& weights) {
  weights.validate();
  const Tensor4& z = tape.value(logits);
  if (z.shape() != targets.shape()) {
    throw DimensionError("classification_loss: logits " + to_string(z.shape()) + " vs targets " +
                         to_string(targets.shape()));
  }
  for (float y : targets.data()) {
    if (y != 0.0f && y != 1.0f) throw ValueError("classification_loss: targets must be binary {0,1}");
  }
  const Shape4 s = z.shape();
  const int classes = s.c;
  std::vector<double> inter(static_cast<std::size_t>(classes), 0.0);
  std::vector<double> uni(static_cast<std::size_t>(classes), 0.0);
  std::vector<float> prob(z.size());
  double ce = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < classes; ++c) {
      const float* zp = z.plane(n, c);
      const float* yp = targets.plane(n, c);
      float* pp = prob.data() + (static_cast<std::size_t>(n) * classes + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double zi = zp[i];
        const double yi = yp[i];
        // max(z,0) - z*y + log(1 + exp(-|z|))
        ce += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::fabs(zi)));
        const double p = 1.0 / (1.0 + std::exp(-zi));
        pp[i] = static_cast<float>(p);
        inter[static_cast<std::size_t>(c)] += p * yi;
        uni[static_cast<std::size_t>(c)] += p + yi - p * yi;
      }
    }
  }
  const double count = static_cast<double>(z.size());
  double ratio_sum = 0.0;
  for (int c = 0; c < classes; ++c) {
    ratio_sum += (inter[static_cast<std::size_t>(c)] + 1.0) / (uni[static_cast<std::size_t>(c)] + 1.0);
  }
  const double soft_iou = 1.0 - ratio_sum / classes;
  const double value = weights.cross_entropy * (ce / count) + weights.soft_iou * soft_iou;

  return tape.record(
      Tensor4::scalar(static_cast<float>(value)), {logits},
      [logits, targets, weights, prob = std::move(prob), inter = std::move(inter), uni = std::move(uni), count,
       classes](Tape& t, const Tensor4& g) {
        const Shape4 s = targets.shape();
        Tensor4& gz = t.grad_buffer(logits);
        const double up = g[0];
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < classes; ++c) {
            const double I = inter[static_cast<std::size_t>(c)] + 1.0;
            const double U = uni[static_cast<std::size_t>(c)] + 1.0;
            const float* yp = targets.plane(n, c);
            const float* pp = prob.data() + (static_cast<std::size_t>(n) * classes + c) * s.plane();
            float* gp = gz.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
              const double p = pp[i];
              const double y = yp[i];
              const double dce = (p - y) / count;
              // d ratio / dp = (y * U - I * (1 - y)) / U^2
              const double dratio_dp = (y * U - I * (1.0 - y)) / (U * U);
              const double diou = -dratio_dp / classes * p * (1.0 - p);
              gp[i] += static_cast<float>(up * (weights.cross_entropy * dce + weights.soft_iou * diou));
            }
          }
        }
      });
}

}  // namespace daug
