#include <doctest.h>

#include <cmath>
#include <numeric>

#include "daug/nn/error.hpp"
#include "daug/nn/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace daug;
using daug::testing::gradcheck;
using daug::testing::random_tensor;
using namespace daug::testing;

namespace {

constexpr double kGradTol = 1e-3;

Tensor4 run(const std::function<Var(Tape&, Var)>& f, const Tensor4& x) {
  Tape t;
  return t.value(f(t, t.constant(x)));
}

}  // namespace

TEST_SUITE("conv2d") {
  TEST_CASE("identity 1x1 kernel reproduces the input") {
    Tape t;
    const Var x = t.constant(Tensor4({1, 1, 2, 2}, 1.0f));
    const Var w = t.constant(Tensor4({1, 1, 1, 1}, 1.0f));
    const Var b = t.constant(Tensor4({1, 1, 1, 1}, 0.0f));
    CHECK(t.value(conv2d(t, x, w, b, {1, 0})) == Tensor4({1, 1, 2, 2}, 1.0f));
  }

  TEST_CASE("output extent follows floor((in + 2p - k)/s) + 1") {
    Tape t;
    const Var x = t.constant(Tensor4({1, 3, 256, 256}));
    const Var w = t.constant(Tensor4({32, 3, 7, 7}));
    const Var b = t.constant(Tensor4({1, 32, 1, 1}));
    CHECK(t.shape(conv2d(t, x, w, b, {1, 3})) == Shape4{1, 32, 256, 256});
    CHECK(conv_out_extent(256, 4, 2, 1) == 128);
    CHECK(conv_out_extent(32, 4, 1, 1) == 31);
  }

  TEST_CASE("channel mismatch names both axes") {
    Tape t;
    const Var x = t.constant(Tensor4({1, 4, 8, 8}));
    const Var w = t.constant(Tensor4({2, 3, 3, 3}));
    const Var b = t.constant(Tensor4({1, 2, 1, 1}));
    try {
      conv2d(t, x, w, b, {1, 1});
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("input channel axis (4)") != std::string::npos);
      CHECK(msg.find("kernel input-channel axis (3)") != std::string::npos);
    }
  }

  TEST_CASE("matches a direct nested-loop convolution") {
    Rng rng(3);
    const Tensor4 x = random_tensor({2, 3, 7, 6}, rng);
    const Tensor4 w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor4 b = random_tensor({1, 4, 1, 1}, rng);
    Tape t;
    const Tensor4 y = t.value(conv2d(t, t.constant(x), t.constant(w), t.constant(b), {2, 1}));
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int oy = 0; oy < y.h(); ++oy)
          for (int ox = 0; ox < y.w(); ++ox) {
            double acc = b[static_cast<std::size_t>(o)];
            for (int c = 0; c < 3; ++c)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                  if (iy >= 0 && iy < 7 && ix >= 0 && ix < 6) acc += double(x.at(n, c, iy, ix)) * w.at(o, c, ky, kx);
                }
            CHECK(y.at(n, o, oy, ox) == doctest::Approx(acc).epsilon(1e-5));
          }
  }

  TEST_CASE("gradients w.r.t. input, weights and bias match finite differences") {
    Rng rng(5);
    for (const ConvSpec spec : {ConvSpec{1, 1}, ConvSpec{2, 1}, ConvSpec{1, 0}}) {
      const auto res = gradcheck([spec](Tape& t, const std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], spec); },
                                 {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 4, 4}, rng),
                                  random_tensor({1, 4, 1, 1}, rng)},
                                 {true, true, true});
      CHECK(res.worst() < kGradTol);
    }
  }
}

TEST_SUITE("upsample and pooling") {
  TEST_CASE("nearest-neighbour blocks replicate their source pixel") {
    const Tensor4 x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    const Tensor4 y = run([](Tape& t, Var v) { return upsample_nn2x(t, v); }, x);
    const std::vector<float> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) == expected);
    Tape t;
    CHECK(t.shape(upsample_nn2x(t, t.constant(Tensor4({2, 128, 64, 64})))) == Shape4{2, 128, 128, 128});
  }

  TEST_CASE("upsample backward is the 2x2 sum-pool of the upstream gradient") {
    Rng rng(7);
    const auto res = gradcheck([](Tape& t, const std::vector<Var>& v) { return upsample_nn2x(t, v[0]); },
                               {random_tensor({2, 2, 3, 4}, rng)}, {true});
    CHECK(res.worst() < kGradTol);
    Tape t;
    const Var x = t.leaf(Tensor4({1, 1, 1, 1}));
    const Var y = upsample_nn2x(t, x);
    t.backward(y, Tensor4({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
    CHECK(t.grad(x)[0] == 10.0f);
  }

  TEST_CASE("max pool picks the block maximum and routes the gradient to it") {
    Rng rng(9);
    Tensor4 x({1, 2, 4, 4});
    std::vector<float> vals(x.size());
    std::iota(vals.begin(), vals.end(), 0.0f);
    for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[rng.below(i)]);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1f * vals[i];
    const auto res = gradcheck([](Tape& t, const std::vector<Var>& v) { return max_pool2x2(t, v[0]); }, {x}, {true});
    CHECK(res.worst() < kGradTol);
    Tape t;
    CHECK_THROWS_AS(max_pool2x2(t, t.constant(Tensor4({1, 1, 3, 4}))), DimensionError);
  }
}

TEST_SUITE("normalisation") {
  TEST_CASE("instance norm zeroes a constant channel") {
    const Tensor4 y = run([](Tape& t, Var v) { return instance_norm(t, v); }, Tensor4({1, 2, 3, 3}, 4.0f));
    for (float v : y.data()) CHECK(v == 0.0f);
  }

  TEST_CASE("instance norm leaves a {-1,+1} channel unchanged up to the eps correction") {
    const Tensor4 x({1, 1, 1, 4}, std::vector<float>{-1, 1, -1, 1});
    const Tensor4 y = run([](Tape& t, Var v) { return instance_norm(t, v); }, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] / std::sqrt(1.0 + 1e-5)));
  }

  TEST_CASE("instance norm output has zero mean and unit std per channel") {
    Rng rng(11);
    const Tensor4 x = random_tensor({3, 4, 8, 8}, rng, -5.0f, 5.0f);
    const Tensor4 y = run([](Tape& t, Var v) { return instance_norm(t, v); }, x);
    for (int n = 0; n < 3; ++n)
      for (int c = 0; c < 4; ++c) {
        const Moments m = plane_moments(y, n, c);
        CHECK(std::fabs(m.mean) < 1e-5);
        CHECK(m.std >= 0.999);
        CHECK(m.std <= 1.001);
      }
  }

  TEST_CASE("layer norm zeroes a constant sample and equals instance norm for one channel") {
    const Tensor4 y = run([](Tape& t, Var v) { return layer_norm(t, v); }, Tensor4({2, 3, 2, 2}, -1.0f));
    for (float v : y.data()) CHECK(v == 0.0f);
    Rng rng(13);
    const Tensor4 x = random_tensor({2, 1, 5, 5}, rng);
    CHECK(run([](Tape& t, Var v) { return layer_norm(t, v); }, x) ==
          run([](Tape& t, Var v) { return instance_norm(t, v); }, x));
  }

  TEST_CASE("normalisation gradients match finite differences") {
    Rng rng(15);
    const auto in = gradcheck([](Tape& t, const std::vector<Var>& v) { return instance_norm(t, v[0]); },
                              {random_tensor({2, 3, 4, 4}, rng)}, {true});
    CHECK(in.worst() < kGradTol);
    const auto ln = gradcheck([](Tape& t, const std::vector<Var>& v) { return layer_norm(t, v[0]); },
                              {random_tensor({2, 3, 4, 4}, rng)}, {true});
    CHECK(ln.worst() < kGradTol);
  }
}

TEST_SUITE("adain") {
  TEST_CASE("identity style equals instance norm") {
    Rng rng(17);
    const Tensor4 x = random_tensor({2, 128, 4, 4}, rng);
    const Tensor4 ones({1, 128, 1, 1}, 1.0f), zeros({1, 128, 1, 1}, 0.0f);
    CHECK(run([&](Tape& t, Var v) { return adain(t, v, ones, zeros); }, x) ==
          run([](Tape& t, Var v) { return instance_norm(t, v); }, x));
  }

  TEST_CASE("constant channel maps to beta") {
    Rng rng(19);
    const Tensor4 gamma = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 beta = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 y = run([&](Tape& t, Var v) { return adain(t, v, gamma, beta); }, Tensor4({1, 128, 3, 3}, 2.5f));
    for (int c = 0; c < 128; ++c)
      for (int i = 0; i < 9; ++i) CHECK(y.plane(0, c)[i] == beta[static_cast<std::size_t>(c)]);
  }

  TEST_CASE("channel moments become (beta, gamma)") {
    Rng rng(21);
    const Tensor4 x = random_tensor({2, 128, 16, 16}, rng, -3.0f, 3.0f);
    const Tensor4 gamma = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 beta = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 y = run([&](Tape& t, Var v) { return adain(t, v, gamma, beta); }, x);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 128; ++c) {
        const Moments m = plane_moments(y, n, c);
        CHECK(std::fabs(m.mean - beta[static_cast<std::size_t>(c)]) < 1e-4);
        CHECK(std::fabs(m.std - gamma[static_cast<std::size_t>(c)]) < 1e-3);
      }
  }

  TEST_CASE("per-sample codes apply to their own sample") {
    Rng rng(23);
    const Tensor4 x = random_tensor({2, 4, 3, 3}, rng);
    const Tensor4 g = random_tensor({2, 4, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 b = random_tensor({2, 4, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 both = run([&](Tape& t, Var v) { return adain(t, v, g, b); }, x);
    const Tensor4 second = run([&](Tape& t, Var v) { return adain(t, v, g.sample(1), b.sample(1)); }, x.sample(1));
    CHECK(both.sample(1) == second);
  }

  TEST_CASE("code length must match the channel axis") {
    Tape t;
    const Var x = t.constant(Tensor4({1, 64, 2, 2}));
    CHECK_THROWS_AS(adain(t, x, Tensor4({1, 128, 1, 1}), Tensor4({1, 128, 1, 1})), DimensionError);
  }

  TEST_CASE("gradient w.r.t. the activation matches finite differences") {
    Rng rng(25);
    const Tensor4 gamma = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const Tensor4 beta = random_tensor({1, 128, 1, 1}, rng, 0.0f, 1.0f);
    const auto res = gradcheck([&](Tape& t, const std::vector<Var>& v) { return adain(t, v[0], gamma, beta); },
                               {random_tensor({1, 128, 3, 3}, rng)}, {true});
    CHECK(res.worst() < kGradTol);
  }
}

TEST_SUITE("activations") {
  TEST_CASE("leaky relu values") {
    const Tensor4 y =
        run([](Tape& t, Var v) { return leaky_relu(t, v, 0.2f); }, Tensor4({1, 1, 1, 2}, std::vector<float>{1, -1}));
    CHECK(y[0] == 1.0f);
    CHECK(y[1] == doctest::Approx(-0.2f));
  }

  TEST_CASE("activation gradients away from kinks") {
    Rng rng(27);
    for (auto op : std::vector<std::function<Var(Tape&, Var)>>{
             [](Tape& t, Var v) { return leaky_relu(t, v); }, [](Tape& t, Var v) { return relu(t, v); },
             [](Tape& t, Var v) { return daug::tanh(t, v); }, [](Tape& t, Var v) { return sigmoid(t, v); },
             [](Tape& t, Var v) { return scale(t, v, -3.0f); }, [](Tape& t, Var v) { return one_minus(t, v); },
             [](Tape& t, Var v) { return mean_all(t, v); }, [](Tape& t, Var v) { return spatial_mean(t, v); }}) {
      const auto res = gradcheck([&](Tape& t, const std::vector<Var>& v) { return op(t, v[0]); },
                                 {away_from_zero({2, 2, 3, 3}, rng)}, {true});
      CHECK(res.worst() < kGradTol);
    }
  }

  TEST_CASE("clamped log has zero gradient where clamped") {
    Tape t;
    const Var x = t.leaf(Tensor4({1, 1, 1, 3}, std::vector<float>{0.0f, 0.5f, 1.0f}));
    const Var y = mean_all(t, clamped_log(t, x, 1e-7f, 1.0f - 1e-7f));
    t.backward(y);
    const Tensor4 g = t.grad(x);
    CHECK(g[0] == 0.0f);
    CHECK(g[1] == doctest::Approx(2.0 / 3.0));
    CHECK(g[2] == 0.0f);
    Rng rng(29);
    const auto res = gradcheck([](Tape& tp, const std::vector<Var>& v) { return clamped_log(tp, v[0], 1e-7f, 1.0f); },
                               {random_tensor({1, 2, 3, 3}, rng, 0.1f, 0.9f)}, {true});
    CHECK(res.worst() < kGradTol);
  }
}

TEST_SUITE("structural ops") {
  TEST_CASE("concat and add gradients") {
    Rng rng(31);
    const auto cat = gradcheck([](Tape& t, const std::vector<Var>& v) { return concat_channels(t, v[0], v[1]); },
                               {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)}, {true, true});
    CHECK(cat.worst() < kGradTol);
    const auto sum = gradcheck([](Tape& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); },
                               {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)}, {true, true});
    CHECK(sum.worst() < kGradTol);
  }

  TEST_CASE("fan-out accumulates exactly twice the single-path gradient") {
    Rng rng(33);
    const Tensor4 x0 = random_tensor({1, 3, 5, 5}, rng);
    const Tensor4 w0 = random_tensor({2, 3, 3, 3}, rng);
    auto f = [&](Tape& t, Var x) {
      const Var w = t.constant(w0);
      const Var b = t.constant(Tensor4({1, 2, 1, 1}));
      return mean_all(t, daug::tanh(t, conv2d(t, x, w, b, {1, 1})));
    };
    Tape single;
    const Var xs = single.leaf(x0);
    single.backward(f(single, xs));
    Tape doubled;
    const Var xd = doubled.leaf(x0);
    doubled.backward(add(doubled, f(doubled, xd), f(doubled, xd)));
    const Tensor4 g1 = single.grad(xs);
    const Tensor4 g2 = doubled.grad(xd);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.0f * g1[i]);
  }

  TEST_CASE("forward ops are bit-reproducible") {
    Rng rng(35);
    const Tensor4 x = random_tensor({2, 3, 8, 8}, rng);
    const Tensor4 w = random_tensor({4, 3, 3, 3}, rng);
    auto f = [&] {
      Tape t;
      const Var y = conv2d(t, t.constant(x), t.constant(w), t.constant(Tensor4({1, 4, 1, 1})), {1, 1});
      return t.value(layer_norm(t, instance_norm(t, y)));
    };
    CHECK(f() == f());
  }

  TEST_CASE("frozen inputs record no backward work") {
    Tape t;
    const Var x = t.constant(Tensor4({1, 1, 2, 2}, 1.0f));
    const Var y = relu(t, x);
    CHECK_FALSE(t.requires_grad(y));
  }
}

TEST_SUITE("losses on tensors") {
  TEST_CASE("mean abs diff value and gradient") {
    Tape t;
    const Var a = t.constant(Tensor4({1, 1, 2, 2}, 0.0f));
    const Var b = t.constant(Tensor4({1, 1, 2, 2}, 1.0f));
    CHECK(t.value(mean_abs_diff(t, a, b)).item() == 1.0f);
    // |a - b| >= 2e-3 keeps every probe off the kink; small differences keep
    // the float rounding of the scalar output below the tolerance.
    Rng rng(37);
    const Tensor4 a0 = random_tensor({2, 3, 4, 4}, rng);
    Tensor4 b0 = a0;
    for (std::size_t i = 0; i < b0.size(); ++i) b0[i] += (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(2e-3f, 2e-2f);
    const auto res = gradcheck([](Tape& tp, const std::vector<Var>& v) { return mean_abs_diff(tp, v[0], v[1]); },
                               {a0, b0}, {true, true});
    CHECK(res.worst() < kGradTol);
  }

  TEST_CASE("sobel l1 is zero for equal images and for constant images") {
    Rng rng(39);
    const Tensor4 a = random_tensor({1, 3, 6, 6}, rng);
    Tape t;
    CHECK(t.value(sobel_l1(t, t.constant(a), t.constant(a))).item() == 0.0f);
    CHECK(t.value(sobel_l1(t, t.constant(Tensor4({1, 3, 6, 6}, 0.3f)), t.constant(Tensor4({1, 3, 6, 6}, -0.8f))))
              .item() == 0.0f);
  }

  TEST_CASE("sobel l1 of a vertical step edge equals the hand-convolved response") {
    // Columns 0..2 are 0, columns 3..5 are 1, in every band.
    Tensor4 step({1, 3, 5, 6});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 5; ++y)
        for (int x = 3; x < 6; ++x) step.at(0, c, y, x) = 1.0f;
    const Tensor4 flat({1, 3, 5, 6}, 0.0f);
    // Direct 3x3 correlation with the Sobel kernels on the gray step image.
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    double sx = 0.0, sy = 0.0;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        double gx = 0.0, gy = 0.0;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            const double gray = (x + j >= 3) ? 1.0 : 0.0;
            gx += kx[i][j] * gray;
            gy += ky[i][j] * gray;
          }
        sx += std::fabs(gx);
        sy += std::fabs(gy);
      }
    const double expected = sx / 12.0 + sy / 12.0;
    Tape t;
    CHECK(t.value(sobel_l1(t, t.constant(step), t.constant(flat))).item() == doctest::Approx(expected));
    CHECK(expected == doctest::Approx(2.0));
  }

  TEST_CASE("sobel l1 rejects small or non 3-band inputs and has correct gradients") {
    Tape t;
    CHECK_THROWS_AS(sobel_l1(t, t.constant(Tensor4({1, 3, 2, 5})), t.constant(Tensor4({1, 3, 2, 5}))), DimensionError);
    CHECK_THROWS_AS(sobel_l1(t, t.constant(Tensor4({1, 1, 5, 5})), t.constant(Tensor4({1, 1, 5, 5}))), DimensionError);
    // Draw pairs whose gray-difference responses all sit at least 1e-2 from
    // zero, so a 1e-3 probe never crosses a kink of |.|.
    Rng rng(41);
    int checked = 0;
    while (checked < 5) {
      const Tensor4 a0 = random_tensor({1, 3, 4, 5}, rng);
      const Tensor4 b0 = random_tensor({1, 3, 4, 5}, rng);
      if (min_abs_sobel_response(a0, b0) < 1e-2) continue;
      const auto res =
          gradcheck([](Tape& tp, const std::vector<Var>& v) { return sobel_l1(tp, v[0], v[1]); }, {a0, b0}, {true, true});
      CHECK(res.worst() < kGradTol);
      ++checked;
    }
  }
}
