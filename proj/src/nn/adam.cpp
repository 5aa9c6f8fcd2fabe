#include "daug/nn/adam.hpp"

#include <cmath>

#include "daug/nn/error.hpp"

namespace daug {

void Adam::step(std::span<Tensor4* const> params, std::span<const Tensor4> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (!m_.empty() && m_.size() != params.size()) {
    throw DimensionError("adam: parameter list length changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].empty()) continue;
    if (params[i]->shape() != grads[i].shape()) {
      throw DimensionError("adam: gradient " + std::to_string(i) + " shape " + to_string(grads[i].shape()) +
                           " does not match parameter " + to_string(params[i]->shape()));
    }
    if (!grads[i].all_finite()) {
      throw ValueError("adam: non-finite gradient in parameter " + std::to_string(i) + "; step rejected");
    }
  }
  if (m_.empty()) {
    for (Tensor4* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
    tensor_steps_.assign(params.size(), 0);
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].empty()) continue;
    const double t = static_cast<double>(++tensor_steps_[i]);
    const double correction1 = 1.0 - std::pow(b1, t);
    const double correction2 = 1.0 - std::pow(b2, t);
    float* p = params[i]->ptr();
    const float* g = grads[i].ptr();
    float* m = m_[i].ptr();
    float* v = v_[i].ptr();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * static_cast<double>(g[k]) * g[k]);
      const double mhat = m[k] / correction1;
      const double vhat = v[k] / correction2;
      p[k] = static_cast<float>(p[k] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void Adam::restore(long long steps, std::vector<Tensor4> m, std::vector<Tensor4> v) {
  std::vector<long long> counts(m.size(), steps);
  restore(steps, std::move(counts), std::move(m), std::move(v));
}

void Adam::restore(long long steps, std::vector<long long> tensor_steps, std::vector<Tensor4> m,
                   std::vector<Tensor4> v) {
  if (m.size() != v.size() || m.size() != tensor_steps.size()) {
    throw DimensionError("adam: moment lists differ in length");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != v[i].shape()) throw DimensionError("adam: moment shapes differ");
  }
  steps_ = steps;
  tensor_steps_ = std::move(tensor_steps);
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::extend(std::span<const Shape4> shapes) {
  if (m_.empty()) return;
  for (const Shape4& s : shapes) {
    m_.emplace_back(s);
    v_.emplace_back(s);
    tensor_steps_.push_back(0);
  }
}

}  // namespace daug
