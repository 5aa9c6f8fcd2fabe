#include <doctest.h>

#include <cmath>
#include <limits>

#include "daug/nn/adam.hpp"
#include "daug/nn/error.hpp"

using namespace daug;

namespace {

// Scalar Adam written straight from the update rule, in double.
struct ScalarAdam {
  double lr, b1, b2, eps, m = 0, v = 0;
  int t = 0;
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("zero gradients leave parameters unchanged") {
  Tensor4 p({1, 1, 2, 2}, 0.25f);
  const Tensor4 before = p;
  Adam adam;
  std::vector<Tensor4*> params{&p};
  std::vector<Tensor4> grads{Tensor4(p.shape())};
  for (int i = 0; i < 3; ++i) adam.step(params, grads);
  CHECK(p == before);
  CHECK(adam.step_count() == 3);
}

TEST_CASE("first step moves each parameter by about lr against the gradient sign") {
  Tensor4 p({1, 1, 1, 3}, std::vector<float>{0.0f, 0.0f, 0.0f});
  Adam adam(AdamConfig{1e-3f, 0.5f, 0.999f, 1e-8f});
  std::vector<Tensor4*> params{&p};
  std::vector<Tensor4> grads{Tensor4({1, 1, 1, 3}, std::vector<float>{2.0f, -0.5f, 1e-3f})};
  adam.step(params, grads);
  // mhat = g, vhat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(p[0] == doctest::Approx(-1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(-1e-3 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-5));
}

TEST_CASE("ten steps on a scalar quadratic track the scalar oracle") {
  // f(p) = (p - 3)^2, g = 2 (p - 3)
  Tensor4 p = Tensor4::scalar(0.5f);
  Adam adam(AdamConfig{0.05f, 0.5f, 0.999f, 1e-8f});
  ScalarAdam oracle{0.05, 0.5, 0.999, 1e-8};
  double q = 0.5;
  std::vector<Tensor4*> params{&p};
  for (int i = 0; i < 10; ++i) {
    std::vector<Tensor4> grads{Tensor4::scalar(2.0f * (p[0] - 3.0f))};
    adam.step(params, grads);
    q = oracle.step(q, 2.0 * (q - 3.0));
    CHECK(std::fabs(p[0] - q) < 1e-6);
  }
}

TEST_CASE("non-finite gradients reject the step without side effects") {
  Tensor4 p({1, 1, 1, 2}, 1.0f);
  Adam adam;
  std::vector<Tensor4*> params{&p};
  std::vector<Tensor4> grads{Tensor4({1, 1, 1, 2}, std::vector<float>{0.1f, std::numeric_limits<float>::quiet_NaN()})};
  CHECK_THROWS_AS(adam.step(params, grads), ValueError);
  CHECK(p == Tensor4({1, 1, 1, 2}, 1.0f));
  CHECK(adam.step_count() == 0);
  CHECK(adam.first_moments().empty());
}

TEST_CASE("moment buffers mirror parameter shapes") {
  Tensor4 a({2, 3, 1, 1}, 1.0f);
  Tensor4 b({1, 1, 4, 4}, 1.0f);
  Adam adam;
  std::vector<Tensor4*> params{&a, &b};
  std::vector<Tensor4> grads{Tensor4(a.shape(), 0.1f), Tensor4(b.shape(), 0.1f)};
  adam.step(params, grads);
  CHECK(adam.first_moments()[0].shape() == a.shape());
  CHECK(adam.second_moments()[1].shape() == b.shape());
  std::vector<Tensor4> bad{Tensor4(a.shape()), Tensor4({1, 1, 2, 2})};
  CHECK_THROWS_AS(adam.step(params, bad), DimensionError);
}

TEST_CASE("tensors appended after the first step start with their own bias correction") {
  Tensor4 a = Tensor4::scalar(0.0f);
  Adam adam(AdamConfig{0.01f, 0.5f, 0.999f, 1e-8f});
  ScalarAdam oa{0.01, 0.5, 0.999, 1e-8};
  ScalarAdam ob{0.01, 0.5, 0.999, 1e-8};
  double qa = 0.0, qb = 1.0;
  {
    std::vector<Tensor4*> params{&a};
    for (int i = 0; i < 5; ++i) {
      adam.step(params, std::vector<Tensor4>{Tensor4::scalar(0.3f)});
      qa = oa.step(qa, 0.3);
    }
  }
  Tensor4 b = Tensor4::scalar(1.0f);
  const Shape4 added[] = {b.shape()};
  adam.extend(added);
  std::vector<Tensor4*> params{&a, &b};
  for (int i = 0; i < 3; ++i) {
    adam.step(params, std::vector<Tensor4>{Tensor4::scalar(0.3f), Tensor4::scalar(-0.7f)});
    qa = oa.step(qa, 0.3);
    qb = ob.step(qb, -0.7);
    CHECK(std::fabs(a[0] - qa) < 1e-6);
    CHECK(std::fabs(b[0] - qb) < 1e-6);
  }
  CHECK(adam.tensor_steps() == std::vector<long long>{8, 3});
  CHECK(adam.step_count() == 8);
}

TEST_CASE("an empty gradient leaves its parameter and moments untouched") {
  Tensor4 a = Tensor4::scalar(1.0f);
  Tensor4 b = Tensor4::scalar(1.0f);
  Adam adam;
  std::vector<Tensor4*> params{&a, &b};
  adam.step(params, std::vector<Tensor4>{Tensor4::scalar(1.0f), Tensor4::scalar(1.0f)});
  const Tensor4 b_after_first = b;
  const Tensor4 mb = adam.first_moments()[1];
  adam.step(params, std::vector<Tensor4>{Tensor4::scalar(1.0f), Tensor4()});
  CHECK(b == b_after_first);
  CHECK(adam.first_moments()[1] == mb);
  CHECK(adam.tensor_steps() == std::vector<long long>{2, 1});
}
