#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "daug/daugnet/daugnet.hpp"
#include "daug/data/dataset.hpp"
#include "daug/data/synth.hpp"
#include "daug/nn/error.hpp"
#include "gradcheck.hpp"

using namespace daug;
using daug::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Setup {
  std::vector<DomainImage> domains;
  StyleCheckpoint stage1;
  LabeledPatchSet set;
};

Setup setup(int size = 32, int patch = 16) {
  Rng rng(2);
  Setup s;
  s.domains = generate_synth_domains(default_synth_specs(size), rng);
  const DomainRegistry reg = registry_for(s.domains, 4);
  s.stage1 = StyleCheckpoint::initial(reg, 6);
  s.set = assemble_patchset(s.domains, reg, patch, patch / 4);
  return s;
}

std::vector<int> labeled_sources(const Setup& s) {
  std::vector<int> pool;
  for (std::size_t i = 0; i < s.set.patches.size(); ++i) {
    const auto& p = s.set.patches[i];
    if (p.labeled() && s.stage1.registry.at(p.domain_id).role == DomainRole::Source) pool.push_back(static_cast<int>(i));
  }
  return pool;
}

DAugConfig tiny_config(double prob = 0.9) {
  DAugConfig cfg;
  cfg.diversify_prob = prob;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 2;
  cfg.batch_size = 2;
  cfg.rng_seed = 3;
  return cfg;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("output keeps the input size with three logit channels") {
    const ClassifierParams p = ClassifierParams::init(1);
    Rng rng(1);
    const Tensor4 x = random_tensor({1, 3, 256, 256}, rng);
    const Tensor4 y = classifier_forward(x, p);
    CHECK(y.shape() == Shape4{1, 3, 256, 256});
    CHECK(y.all_finite());
    CHECK(classifier_forward(random_tensor({2, 3, 16, 48}, rng), p).shape() == Shape4{2, 3, 16, 48});
    CHECK_THROWS_AS(classifier_forward(Tensor4({1, 3, 24, 32}), p), DimensionError);
    CHECK_THROWS_AS(classifier_forward(Tensor4({1, 1, 32, 32}), p), DimensionError);
  }

  TEST_CASE("forward is deterministic and init is seeded") {
    Rng rng(2);
    const Tensor4 x = random_tensor({1, 3, 32, 32}, rng);
    const ClassifierParams p = ClassifierParams::init(5);
    CHECK(classifier_forward(x, p) == classifier_forward(x, p));
    CHECK(ClassifierParams::init(5) == p);
    CHECK_FALSE(ClassifierParams::init(6) == p);
  }

  TEST_CASE("the gradient reaches the first encoder layer") {
    const ClassifierParams p0 = ClassifierParams::init(7);
    Rng rng(3);
    const Tensor4 x = random_tensor({1, 3, 16, 16}, rng);
    const Tensor4 probe = random_tensor({1, 3, 16, 16}, rng);
    auto loss_at = [&](const ClassifierParams& p) {
      const Tensor4 y = classifier_forward(x, p);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * probe[i];
      return s;
    };
    Tape tape;
    const BoundClassifier c = bind(tape, p0, true);
    tape.backward(classifier_forward(tape, c, tape.constant(x)), probe);
    const Tensor4 g = tape.grad(c.layers[0].weight);
    double norm = 0.0;
    for (float v : g.data()) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    REQUIRE(norm > 0.0);
    // slope along the normalised gradient must equal its norm
    const double h = 3e-4;
    ClassifierParams plus = p0, minus = p0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      plus.down[0][0].weight[i] += static_cast<float>(h * g[i] / norm);
      minus.down[0][0].weight[i] -= static_cast<float>(h * g[i] / norm);
    }
    const double slope = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
    CHECK(std::fabs(slope - norm) / norm < 2e-2);
  }

  TEST_CASE("checkpoint round trip uses the classifier prefix") {
    const fs::path dir = fs::temp_directory_path() / "daug_test_classifier";
    fs::create_directories(dir);
    const ClassifierParams p = ClassifierParams::init(8);
    save_classifier(dir / "c.ckpt", p);
    const ClassifierParams back = load_classifier(dir / "c.ckpt");
    CHECK(back == p);
    save_classifier(dir / "d.ckpt", back);
    CHECK(file_bytes(dir / "c.ckpt") == file_bytes(dir / "d.ckpt"));
    for (const auto& [name, t] : read_tensor_file(dir / "c.ckpt").tensors) CHECK(name.rfind("classifier/", 0) == 0);
    Setup s = setup();
    save_checkpoint(dir / "style.ckpt", s.stage1);
    CHECK_THROWS_AS(load_classifier(dir / "style.ckpt"), FormatError);
  }
}

TEST_SUITE("augmentor") {
  TEST_CASE("probability 0 passes the batch through bit-identically") {
    Setup s = setup();
    Rng data(4);
    const Tensor4 x = random_tensor({3, 3, 16, 16}, data);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const AugmentResult r = augment_batch(x, s.stage1.registry, s.stage1.generator, rng, 0.0);
      CHECK_FALSE(r.diversified);
      CHECK(r.images == x);
    }
  }

  TEST_CASE("probability 1 restyles every patch and keeps shapes") {
    Setup s = setup();
    Rng data(6);
    const Tensor4 x = random_tensor({4, 3, 16, 16}, data);
    Rng rng(7);
    const AugmentResult r = augment_batch(x, s.stage1.registry, s.stage1.generator, rng, 1.0);
    CHECK(r.diversified);
    CHECK(r.images.shape() == x.shape());
    REQUIRE(r.styles.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK_FALSE(r.images.sample(i) == x.sample(i));
      const Tensor4 single = stylize(x.sample(i), s.stage1.registry.at(r.styles[static_cast<std::size_t>(i)]).code,
                                     s.stage1.generator);
      const Tensor4 got = r.images.sample(i);
      for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(single[k]).epsilon(1e-5));
    }
    CHECK_THROWS_AS(augment_batch(x, DomainRegistry{}, s.stage1.generator, rng, 1.0), RegistryError);
    CHECK_THROWS_AS(augment_batch(x, s.stage1.registry, s.stage1.generator, rng, 1.5), ValueError);
  }

  TEST_CASE("activation rate is 0.9 and style choice is uniform per patch") {
    Setup s = setup();
    Rng data(8);
    const Tensor4 x = random_tensor({2, 3, 4, 4}, data);
    Rng rng(9);
    int active = 0;
    std::map<int, int> styles;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
      const AugmentResult r = augment_batch(x, s.stage1.registry, s.stage1.generator, rng, 0.9);
      if (r.diversified) ++active;
      for (int h : r.styles) ++styles[h];
    }
    const double rate = static_cast<double>(active) / trials;
    MESSAGE("activation rate " << rate);
    CHECK(std::fabs(rate - 0.9) <= 0.03);
    REQUIRE(styles.size() == 3);
    const double total = 2.0 * active;
    double chi2 = 0.0;
    for (const auto& [h, c] : styles) chi2 += (c - total / 3.0) * (c - total / 3.0) / (total / 3.0);
    CHECK(chi2 < 9.21);  // chi-square critical value, 2 dof, alpha 0.01
  }

  TEST_CASE("batches keep original masks under the same flips and rotations") {
    Setup s = setup();
    const std::vector<int> pool = labeled_sources(s);
    Rng rng(10);
    for (int rep = 0; rep < 10; ++rep) {
      const DAugBatch b = sample_daug_batch(s.set, pool, s.stage1, 0.9, 3, rng);
      for (int i = 0; i < 3; ++i) {
        const LabeledPatch& p = s.set.patches[static_cast<std::size_t>(b.patch_indices[static_cast<std::size_t>(i)])];
        const int k = b.transforms[static_cast<std::size_t>(i)];
        CHECK(b.masks.sample(i) == apply_dihedral(p.mask, k));
        CHECK(b.images.sample(i) == apply_dihedral(b.augment.images.sample(i), k));
        if (!b.augment.diversified) CHECK(b.augment.images.sample(i) == p.image);
        CHECK(s.stage1.registry.at(p.domain_id).role == DomainRole::Source);
      }
    }
  }
}

TEST_SUITE("training") {
  TEST_CASE("stage-1 weights stay frozen and runs are reproducible") {
    Setup s = setup();
    const StyleCheckpoint before = s.stage1;
    double l1 = 0.0, l2 = 0.0;
    const ClassifierParams a = train_daugnet(s.set, s.stage1, tiny_config(), std::nullopt,
                                             [&](const DAugStepReport& r) { l1 = r.loss; });
    const ClassifierParams b = train_daugnet(s.set, s.stage1, tiny_config(), std::nullopt,
                                             [&](const DAugStepReport& r) { l2 = r.loss; });
    CHECK(l1 == l2);
    CHECK(std::isfinite(l1));
    CHECK(a == b);
    double drift = 0.0;
    GeneratorParams g0 = before.generator;
    GeneratorParams g1 = s.stage1.generator;
    const auto n0 = g0.named_tensors();
    const auto n1 = g1.named_tensors();
    for (std::size_t i = 0; i < n0.size(); ++i)
      for (std::size_t k = 0; k < n0[i].tensor->size(); ++k) drift += std::fabs((*n0[i].tensor)[k] - (*n1[i].tensor)[k]);
    CHECK(drift == 0.0);
    CHECK(s.stage1.registry == before.registry);
    CHECK_FALSE(a == ClassifierParams::init(derive_seed(3, 0)));
  }

  TEST_CASE("warm start continues from the given weights") {
    Setup s = setup();
    const ClassifierParams init = ClassifierParams::init(42);
    DAugConfig frozen = tiny_config();
    frozen.lr = 0.0;
    CHECK(train_daugnet(s.set, s.stage1, frozen, init) == init);
    CHECK_FALSE(train_daugnet(s.set, s.stage1, tiny_config(), init) == init);
  }

  TEST_CASE("patches from unknown domains or without labeled sources are rejected") {
    Setup s = setup();
    LabeledPatchSet bad = s.set;
    bad.patches[0].domain_id = 7;
    CHECK_THROWS_AS(train_daugnet(bad, s.stage1, tiny_config()), RegistryError);
    LabeledPatchSet targets;
    for (const auto& p : s.set.patches)
      if (p.domain_id == 2) targets.patches.push_back(p);
    CHECK_THROWS_AS(train_daugnet(targets, s.stage1, tiny_config()), ValueError);
    DAugConfig cfg = tiny_config();
    cfg.diversify_prob = 1.2;
    CHECK_THROWS_AS(train_daugnet(s.set, s.stage1, cfg), ValueError);
  }
}

TEST_SUITE("prediction") {
  TEST_CASE("a single 256 tile equals one forward pass plus threshold") {
    const ClassifierParams p = ClassifierParams::init(11);
    Rng rng(12);
    const Tensor4 x = random_tensor({1, 3, 256, 256}, rng);
    const Tensor4 logits = classifier_forward(x, p);
    const Tensor4 m = predict_map(x, p, 256, 32);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == (logits[i] > 0.0f ? 1.0f : 0.0f));
  }

  TEST_CASE("tiled logits are the average of the overlapping window forwards") {
    const ClassifierParams p = ClassifierParams::init(19);
    Rng rng(20);
    const Tensor4 x = random_tensor({1, 3, 80, 96}, rng);
    const int tile = 32;
    auto starts = [&](int extent) {
      std::vector<int> out;
      for (int a = 0; a + tile < extent; a += tile - 8) out.push_back(a);
      out.push_back(extent - tile);
      return out;
    };
    Tensor4 sum({1, 3, 80, 96});
    Tensor4 count({1, 1, 80, 96});
    for (int y0 : starts(80))
      for (int x0 : starts(96)) {
        Tensor4 window({1, 3, tile, tile});
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < tile; ++y)
            for (int xx = 0; xx < tile; ++xx) window.at(0, c, y, xx) = x.at(0, c, y0 + y, x0 + xx);
        const Tensor4 out = classifier_forward(window, p);
        for (int y = 0; y < tile; ++y)
          for (int xx = 0; xx < tile; ++xx) {
            for (int c = 0; c < 3; ++c) sum.at(0, c, y0 + y, x0 + xx) += out.at(0, c, y, xx);
            count.at(0, 0, y0 + y, x0 + xx) += 1.0f;
          }
      }
    const Tensor4 got = predict_logits(x, p, tile, 8);
    REQUIRE(got.shape() == sum.shape());
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 80; ++y)
        for (int xx = 0; xx < 96; ++xx)
          CHECK(got.at(0, c, y, xx) == doctest::Approx(sum.at(0, c, y, xx) / count.at(0, 0, y, xx)).epsilon(1e-5));
  }

  TEST_CASE("a constant-logit classifier gives a constant mask for any tiling") {
    ClassifierParams p = ClassifierParams::init(13);
    for (float& w : p.head.weight.data()) w = 0.0f;
    p.head.bias = Tensor4({1, 3, 1, 1}, std::vector<float>{1.5f, -0.5f, 2.0f});
    Rng rng(14);
    const Tensor4 x = random_tensor({1, 3, 80, 112}, rng);
    for (auto [tile, overlap] : {std::pair{32, 8}, std::pair{48, 16}, std::pair{64, 0}}) {
      const Tensor4 m = predict_map(x, p, tile, overlap);
      CHECK(m.shape() == Shape4{1, 3, 80, 112});
      for (int y = 0; y < 80; ++y)
        for (int xx = 0; xx < 112; ++xx) {
          CHECK(m.at(0, 0, y, xx) == 1.0f);
          CHECK(m.at(0, 1, y, xx) == 0.0f);
          CHECK(m.at(0, 2, y, xx) == 1.0f);
        }
    }
  }

  TEST_CASE("inputs smaller than a tile are reflect-padded and cropped back") {
    const ClassifierParams p = ClassifierParams::init(15);
    Rng rng(16);
    const Tensor4 x = random_tensor({1, 3, 20, 40}, rng);
    const Tensor4 m = predict_map(x, p, 32, 8);
    CHECK(m.shape() == Shape4{1, 3, 20, 40});
    for (float v : m.data()) CHECK((v == 0.0f || v == 1.0f));
  }
}
