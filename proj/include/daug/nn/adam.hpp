#pragma once

#include <span>
#include <vector>

#include "daug/nn/tensor.hpp"

namespace daug {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Bias-corrected Adam over an ordered list of parameter tensors.
///
/// Moment buffers are created on the first step and mirror the parameter
/// shapes. The parameter list must keep the same order and shapes across
/// steps.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update. An empty gradient skips its parameter entirely:
  /// value, moments and step count stay as they are. Throws ValueError without touching anything when a
  /// gradient holds a NaN or infinity, DimensionError on shape mismatch.
  void step(std::span<Tensor4* const> params, std::span<const Tensor4> grads);

  void set_lr(float lr) { config_.lr = lr; }
  void set_betas(float beta1, float beta2) {
    config_.beta1 = beta1;
    config_.beta2 = beta2;
  }
  const AdamConfig& config() const { return config_; }
  long long step_count() const { return steps_; }

  /// Updates applied to each tensor; drives its bias correction.
  const std::vector<long long>& tensor_steps() const { return tensor_steps_; }

  std::vector<Tensor4>& first_moments() { return m_; }
  std::vector<Tensor4>& second_moments() { return v_; }
  const std::vector<Tensor4>& first_moments() const { return m_; }
  const std::vector<Tensor4>& second_moments() const { return v_; }

  /// Restores persisted state; moments must mirror the parameter list.
  void restore(long long steps, std::vector<Tensor4> m, std::vector<Tensor4> v);
  void restore(long long steps, std::vector<long long> tensor_steps, std::vector<Tensor4> m, std::vector<Tensor4> v);

  /// Appends zeroed moments for parameters added after the state was created.
  /// No-op before the first step.
  void extend(std::span<const Shape4> shapes);

 private:
  AdamConfig config_;
  long long steps_ = 0;
  std::vector<long long> tensor_steps_;
  std::vector<Tensor4> m_;
  std::vector<Tensor4> v_;
};

}  // namespace daug
