#include "daug/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "daug/nn/error.hpp"

namespace daug {

namespace {

using Rgb = std::array<float, 3>;

enum Label : unsigned char { kGround = 0, kBuilding = 1, kRoad = 2, kTree = 3 };

constexpr Rgb kSoil{0.62f, 0.52f, 0.40f};
constexpr Rgb kGrass{0.42f, 0.52f, 0.30f};
constexpr Rgb kRoadColor{0.33f, 0.33f, 0.36f};
constexpr Rgb kTreeColor{0.12f, 0.30f, 0.10f};
constexpr Rgb kRoofs[] = {{0.78f, 0.38f, 0.30f}, {0.74f, 0.74f, 0.76f}, {0.90f, 0.85f, 0.72f}, {0.56f, 0.44f, 0.52f}};

struct Layout {
  int size = 0;
  std::vector<unsigned char> label;
  std::vector<unsigned char> roof;
  std::vector<float> ground_mix;  // 0 = soil, 1 = grass
};

struct Shape {
  std::vector<int> pixels;
};

double fraction(std::size_t count, int size) { return static_cast<double>(count) / (static_cast<double>(size) * size); }

Shape rectangle(Rng& g, int s) {
  const int lo = std::max(3, s / 32);
  const int hi = std::max(lo + 1, s / 10);
  const int w = lo + static_cast<int>(g.below(static_cast<std::uint64_t>(hi - lo + 1)));
  const int h = lo + static_cast<int>(g.below(static_cast<std::uint64_t>(hi - lo + 1)));
  const int x0 = static_cast<int>(g.below(static_cast<std::uint64_t>(s - w + 1)));
  const int y0 = static_cast<int>(g.below(static_cast<std::uint64_t>(s - h + 1)));
  Shape out;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) out.pixels.push_back(y * s + x);
  return out;
}

Shape road(Rng& g, int s) {
  const int width = 2 + static_cast<int>(g.below(static_cast<std::uint64_t>(std::max(1, s / 64) + 1)));
  const int kind = static_cast<int>(g.below(4));
  const double c = g.uniform_double() * s;
  Shape out;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double d = 0.0;
      switch (kind) {
        case 0: d = y - c; break;
        case 1: d = x - c; break;
        case 2: d = (x - y + s / 2.0 - c) / std::sqrt(2.0); break;
        default: d = (x + y - s / 2.0 - c) / std::sqrt(2.0); break;
      }
      if (std::fabs(d) < width / 2.0) out.pixels.push_back(y * s + x);
    }
  }
  return out;
}

Shape blob(Rng& g, int s) {
  const double cx = g.uniform_double() * s;
  const double cy = g.uniform_double() * s;
  const int lobes = 2 + static_cast<int>(g.below(4));
  const double rmax = std::max(2.5, s / 20.0);
  std::vector<std::array<double, 3>> discs;
  for (int i = 0; i < lobes; ++i) {
    const double r = 1.5 + g.uniform_double() * (rmax - 1.5);
    discs.push_back({cx + (g.uniform_double() - 0.5) * 2.0 * rmax, cy + (g.uniform_double() - 0.5) * 2.0 * rmax, r});
  }
  Shape out;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (const auto& d : discs) {
        const double dx = x + 0.5 - d[0];
        const double dy = y + 0.5 - d[1];
        if (dx * dx + dy * dy <= d[2] * d[2]) {
          out.pixels.push_back(y * s + x);
          break;
        }
      }
    }
  }
  return out;
}

// Adds shapes of one class until its visible share reaches a target drawn
// inside the range; shapes that would overshoot the range are skipped.
template <typename Make>
void populate(Layout& L, Rng& g, Label cls, const FractionRange& range, int max_shapes, Make make,
              const std::string& domain, const char* what) {
  const double target = range.lo + (0.25 + 0.35 * g.uniform_double()) * (range.hi - range.lo);
  std::size_t visible = 0;
  const int attempts = max_shapes * 4;
  int placed = 0;
  for (int a = 0; a < attempts && placed < max_shapes && fraction(visible, L.size) < target; ++a) {
    const Shape sh = make(g, L.size);
    std::size_t gained = 0;
    for (int p : sh.pixels) {
      if (L.label[static_cast<std::size_t>(p)] == kGround) ++gained;
    }
    if (gained == 0 || fraction(visible + gained, L.size) > range.hi) continue;
    const unsigned char roof = static_cast<unsigned char>(g.below(std::size(kRoofs)));
    for (int p : sh.pixels) {
      auto& lab = L.label[static_cast<std::size_t>(p)];
      if (lab == kGround) {
        lab = cls;
        L.roof[static_cast<std::size_t>(p)] = roof;
      }
    }
    visible += gained;
    ++placed;
  }
  if (!range.contains(fraction(visible, L.size))) {
    throw ValueError("domain " + domain + ": could not place " + what + " within the configured fraction range");
  }
}

Layout make_layout(const SynthDomainSpec& spec) {
  const int s = spec.size;
  Layout L;
  L.size = s;
  L.label.assign(static_cast<std::size_t>(s) * s, kGround);
  L.roof.assign(L.label.size(), 0);
  L.ground_mix.assign(L.label.size(), 0.0f);
  Rng g(spec.geometry_seed);
  std::array<std::array<double, 3>, 3> waves{};
  for (auto& w : waves) {
    const double angle = g.uniform_double() * 6.283185307179586;
    const double freq = (1.0 + 2.0 * g.uniform_double()) * 6.283185307179586 / s;
    w = {std::cos(angle) * freq, std::sin(angle) * freq, g.uniform_double() * 6.283185307179586};
  }
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double v = 0.0;
      for (const auto& w : waves) v += std::sin(w[0] * x + w[1] * y + w[2]);
      L.ground_mix[static_cast<std::size_t>(y) * s + x] = static_cast<float>(0.5 + v / 6.0);
    }
  }
  // Buildings first, then roads and trees only claim ground pixels, which
  // realises the priority building > road > tree.
  populate(L, g, kBuilding, spec.building, spec.max_buildings, rectangle, spec.name, "buildings");
  populate(L, g, kRoad, spec.road, spec.max_roads, road, spec.name, "roads");
  populate(L, g, kTree, spec.tree, spec.max_trees, blob, spec.name, "trees");
  return L;
}

double det3(const std::array<float, 9>& m) {
  return static_cast<double>(m[0]) * (static_cast<double>(m[4]) * m[8] - static_cast<double>(m[5]) * m[7]) -
         static_cast<double>(m[1]) * (static_cast<double>(m[3]) * m[8] - static_cast<double>(m[5]) * m[6]) +
         static_cast<double>(m[2]) * (static_cast<double>(m[3]) * m[7] - static_cast<double>(m[4]) * m[6]);
}

}  // namespace

void ColorTransform::validate() const {
  if (std::fabs(det3(matrix)) < 1e-6) throw ValueError("color transform matrix is singular");
  for (float g : gamma) {
    if (!(g > 0.0f) || !std::isfinite(g)) throw ValueError("color transform gamma must be positive");
  }
  std::array<int, 3> sorted = permutation;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 3>{0, 1, 2}) throw ValueError("color transform permutation is not a permutation of 0,1,2");
}

std::array<float, 3> ColorTransform::apply(const std::array<float, 3>& rgb) const {
  std::array<float, 3> mixed{};
  for (int i = 0; i < 3; ++i) {
    double v = offset[static_cast<std::size_t>(i)];
    for (int j = 0; j < 3; ++j) v += static_cast<double>(matrix[static_cast<std::size_t>(i * 3 + j)]) * rgb[static_cast<std::size_t>(j)];
    v = std::clamp(v, 0.0, 1.0);
    mixed[static_cast<std::size_t>(i)] = static_cast<float>(std::pow(v, static_cast<double>(gamma[static_cast<std::size_t>(i)])));
  }
  return {mixed[static_cast<std::size_t>(permutation[0])], mixed[static_cast<std::size_t>(permutation[1])],
          mixed[static_cast<std::size_t>(permutation[2])]};
}

std::vector<DomainImage> generate_synth_domains(std::span<const SynthDomainSpec> specs, Rng& rng) {
  if (specs.size() < 2) throw ValueError("synthetic data needs at least two domain specs");
  std::vector<DomainImage> out;
  for (const SynthDomainSpec& spec : specs) {
    spec.color.validate();
    if (spec.size < 16) throw ValueError("domain " + spec.name + ": image size must be at least 16");
    const Layout L = make_layout(spec);
    Rng noise(rng.fork());
    const int s = spec.size;
    DomainImage d{spec.name, spec.role, Tensor4({1, 3, s, s}), Tensor4({1, 3, s, s})};
    for (std::size_t i = 0; i < L.label.size(); ++i) {
      Rgb base{};
      float sigma = 0.025f;
      switch (L.label[i]) {
        case kBuilding: base = kRoofs[L.roof[i]]; break;
        case kRoad: base = kRoadColor; break;
        case kTree:
          base = kTreeColor;
          sigma = 0.05f;
          break;
        default: {
          const float t = std::clamp(L.ground_mix[i], 0.0f, 1.0f);
          for (int c = 0; c < 3; ++c) base[c] = (1.0f - t) * kSoil[c] + t * kGrass[c];
        }
      }
      for (int c = 0; c < 3; ++c) base[c] = std::clamp(base[c] + sigma * noise.normal(), 0.0f, 1.0f);
      const Rgb shown = spec.color.apply(base);
      for (int c = 0; c < 3; ++c) d.image.plane(0, c)[i] = 2.0f * shown[c] - 1.0f;
      if (L.label[i] != kGround) d.mask.plane(0, L.label[i] - 1)[i] = 1.0f;
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::array<double, 3> class_fractions(const Tensor4& mask) {
  if (mask.c() != kClassCount) throw DimensionError("mask must have 3 class channels, got " + to_string(mask.shape()));
  std::array<double, 3> out{};
  for (int n = 0; n < mask.n(); ++n)
    for (int c = 0; c < 3; ++c) {
      const float* p = mask.plane(n, c);
      for (std::size_t i = 0; i < mask.shape().plane(); ++i) out[static_cast<std::size_t>(c)] += p[i];
    }
  for (double& f : out) f /= static_cast<double>(mask.n()) * static_cast<double>(mask.shape().plane());
  return out;
}

std::vector<SynthDomainSpec> default_synth_specs(int size) {
  std::vector<SynthDomainSpec> specs(3);
  specs[0].name = "city_a";
  specs[0].geometry_seed = 101;

  specs[1].name = "city_b";
  specs[1].geometry_seed = 202;
  specs[1].color.matrix = {0.85f, 0.15f, 0.0f, 0.05f, 0.85f, 0.05f, 0.0f, 0.10f, 0.70f};
  specs[1].color.offset = {0.08f, 0.02f, 0.0f};
  specs[1].color.gamma = {0.9f, 1.1f, 1.25f};

  specs[2].name = "city_c";
  specs[2].role = DomainRole::Target;
  specs[2].geometry_seed = 303;
  specs[2].color.matrix = {1.1f, 0.0f, 0.0f, 0.0f, 0.9f, 0.1f, 0.0f, 0.0f, 1.0f};
  specs[2].color.gamma = {1.1f, 0.8f, 1.0f};
  specs[2].color.permutation = {1, 2, 0};
  for (auto& s : specs) s.size = size;
  return specs;
}

}  // namespace daug
