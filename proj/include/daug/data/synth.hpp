#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daug/data/patches.hpp"
#include "daug/nn/rng.hpp"

namespace daug {

/// Appearance of one synthetic domain.
///
/// A canonical RGB value x in [0,1] becomes clamp(M x + offset, 0, 1), raised
/// per channel to `gamma`, then reordered so output channel i reads channel
/// permutation[i]; the result is mapped to [-1,1].
struct ColorTransform {
  std::array<float, 9> matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<float, 3> offset{0, 0, 0};
  std::array<float, 3> gamma{1, 1, 1};
  std::array<int, 3> permutation{0, 1, 2};

  /// Throws ValueError for a singular matrix, a non-positive gamma or an
  /// invalid permutation.
  void validate() const;
  std::array<float, 3> apply(const std::array<float, 3>& rgb) const;
};

struct FractionRange {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double f) const { return f >= lo && f <= hi; }
};

struct SynthDomainSpec {
  std::string name;
  DomainRole role = DomainRole::Source;
  ColorTransform color;
  std::uint64_t geometry_seed = 0;
  int size = 128;
  int max_buildings = 400;
  int max_roads = 40;
  int max_trees = 400;
  FractionRange building{0.05, 0.20};
  FractionRange road{0.04, 0.18};
  FractionRange tree{0.10, 0.35};
};

/// Renders each domain: a shared scene family (ground texture, rectangular
/// roofs, straight roads, tree blobs) laid out from the geometry seed, colored
/// by the domain transform. Masks follow the priority building > road > tree.
/// Pixel noise is drawn from `rng`.
std::vector<DomainImage> generate_synth_domains(std::span<const SynthDomainSpec> specs, Rng& rng);

/// Per-class pixel fractions of a (1,3,H,W) mask.
std::array<double, 3> class_fractions(const Tensor4& mask);

/// The three-domain desk setup: two labeled sources related by a mild color
/// transform and a target whose bands are permuted.
std::vector<SynthDomainSpec> default_synth_specs(int size = 128);

}  // namespace daug
