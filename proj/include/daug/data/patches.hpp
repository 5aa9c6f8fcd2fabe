#pragma once

#include <span>
#include <string>
#include <vector>

#include "daug/nn/rng.hpp"
#include "daug/nn/tensor.hpp"
#include "daug/style/style_code.hpp"

namespace daug {

/// Window origins along one axis: multiples of size - overlap, plus a final
/// window flush with the far edge when the grid stops short of it.
std::vector<int> patch_anchors(int extent, int size, int overlap);

struct Patch {
  Tensor4 data;
  int x = 0;
  int y = 0;
};

/// Cuts a (1,C,H,W) tensor into size x size windows, row-major by anchor.
std::vector<Patch> extract_patches(const Tensor4& image, int size = 256, int overlap = 32);

/// One of the eight symmetries of the square. Index k: rotate by (k % 4)
/// quarter turns counter-clockwise after a horizontal mirror when k >= 4.
Tensor4 apply_dihedral(const Tensor4& t, int k);
int inverse_dihedral(int k);

struct FlipRotateResult {
  Tensor4 image;
  Tensor4 mask;
  int transform = 0;
};

/// Applies one uniformly drawn dihedral transform to the image and to the
/// mask (when non-empty). Both must be square.
FlipRotateResult random_flip_rotate(const Tensor4& image, const Tensor4& mask, Rng& rng);

/// Mask channels.
enum class LandClass { Building = 0, Road = 1, Tree = 2 };
inline constexpr int kClassCount = 3;
inline constexpr const char* kClassNames[kClassCount] = {"building", "road", "tree"};

struct LabeledPatch {
  Tensor4 image;  // (1,3,S,S) in [-1,1]
  Tensor4 mask;   // (1,3,S,S) in {0,1}; empty for unlabeled domains
  int domain_id = 0;
  int x = 0;
  int y = 0;

  bool labeled() const { return !mask.empty(); }
};

struct LabeledPatchSet {
  std::vector<LabeledPatch> patches;

  /// Patch count per head id, for a registry of `domain_count` entries.
  std::vector<int> census(int domain_count) const;
  std::vector<int> indices_of(int domain_id) const;
};

/// A whole-domain image with its optional class masks.
struct DomainImage {
  std::string name;
  DomainRole role = DomainRole::Source;
  Tensor4 image;  // (1,3,H,W)
  Tensor4 mask;   // (1,3,H,W) or empty
};

/// Patches every domain image (and its mask, in lockstep), tagging each patch
/// with the domain's head id.
LabeledPatchSet assemble_patchset(std::span<const DomainImage> domains, const DomainRegistry& registry, int size = 256,
                                  int overlap = 32);

}  // namespace daug
