#include "daug/data/patches.hpp"

#include <algorithm>

#include "daug/nn/error.hpp"

namespace daug {

std::vector<int> patch_anchors(int extent, int size, int overlap) {
  if (size <= 0 || overlap < 0 || overlap >= size) {
    throw ValueError("patch size " + std::to_string(size) + " with overlap " + std::to_string(overlap) +
                     " gives no positive stride");
  }
  if (extent < size) {
    throw DimensionError("image extent " + std::to_string(extent) + " is smaller than the patch size " +
                         std::to_string(size));
  }
  const int stride = size - overlap;
  std::vector<int> out;
  for (int a = 0; a + size <= extent; a += stride) out.push_back(a);
  if (out.back() + size < extent) out.push_back(extent - size);
  return out;
}

std::vector<Patch> extract_patches(const Tensor4& image, int size, int overlap) {
  if (image.n() != 1) throw DimensionError("extract_patches expects a single image, got " + to_string(image.shape()));
  const std::vector<int> ys = patch_anchors(image.h(), size, overlap);
  const std::vector<int> xs = patch_anchors(image.w(), size, overlap);
  std::vector<Patch> out;
  out.reserve(ys.size() * xs.size());
  for (int y0 : ys) {
    for (int x0 : xs) {
      Patch p{Tensor4({1, image.c(), size, size}), x0, y0};
      for (int c = 0; c < image.c(); ++c) {
        for (int y = 0; y < size; ++y) {
          const float* src = image.plane(0, c) + static_cast<std::size_t>(y0 + y) * image.w() + x0;
          std::copy(src, src + size, p.data.plane(0, c) + static_cast<std::size_t>(y) * size);
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

Tensor4 apply_dihedral(const Tensor4& t, int k) {
  if (k < 0 || k > 7) throw ValueError("dihedral index must be in [0,7], got " + std::to_string(k));
  if (t.h() != t.w()) throw DimensionError("flips and rotations need square inputs, got " + to_string(t.shape()));
  const int s = t.h();
  const int turns = k % 4;
  const bool mirror = k >= 4;
  Tensor4 out(t.shape());
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      const float* src = t.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          int sx = x;
          int sy = y;
          // destination (y, x) of a counter-clockwise quarter turn reads (x, s-1-y)
          for (int r = 0; r < turns; ++r) {
            const int ny = sx;
            const int nx = s - 1 - sy;
            sy = ny;
            sx = nx;
          }
          if (mirror) sx = s - 1 - sx;
          dst[static_cast<std::size_t>(y) * s + x] = src[static_cast<std::size_t>(sy) * s + sx];
        }
      }
    }
  }
  return out;
}

int inverse_dihedral(int k) {
  if (k < 0 || k > 7) throw ValueError("dihedral index must be in [0,7], got " + std::to_string(k));
  return k >= 4 ? k : (4 - k) % 4;
}

FlipRotateResult random_flip_rotate(const Tensor4& image, const Tensor4& mask, Rng& rng) {
  if (!mask.empty() && (mask.h() != image.h() || mask.w() != image.w())) {
    throw DimensionError("mask " + to_string(mask.shape()) + " does not match image " + to_string(image.shape()));
  }
  const int k = static_cast<int>(rng.below(8));
  FlipRotateResult r;
  r.transform = k;
  r.image = apply_dihedral(image, k);
  if (!mask.empty()) r.mask = apply_dihedral(mask, k);
  return r;
}

std::vector<int> LabeledPatchSet::census(int domain_count) const {
  std::vector<int> out(static_cast<std::size_t>(domain_count), 0);
  for (const LabeledPatch& p : patches) {
    if (p.domain_id < 0 || p.domain_id >= domain_count) {
      throw RegistryError("patch tagged with unknown domain id " + std::to_string(p.domain_id));
    }
    ++out[static_cast<std::size_t>(p.domain_id)];
  }
  return out;
}

std::vector<int> LabeledPatchSet::indices_of(int domain_id) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].domain_id == domain_id) out.push_back(static_cast<int>(i));
  }
  return out;
}

LabeledPatchSet assemble_patchset(std::span<const DomainImage> domains, const DomainRegistry& registry, int size,
                                  int overlap) {
  LabeledPatchSet set;
  for (const DomainImage& d : domains) {
    const int id = registry.head_of(d.name);
    if (d.image.c() != 3) throw DimensionError("domain " + d.name + ": image must have 3 bands");
    if (!d.mask.empty() && (d.mask.h() != d.image.h() || d.mask.w() != d.image.w())) {
      throw DimensionError("domain " + d.name + ": mask " + to_string(d.mask.shape()) + " does not match image " +
                           to_string(d.image.shape()));
    }
    std::vector<Patch> images = extract_patches(d.image, size, overlap);
    std::vector<Patch> masks;
    if (!d.mask.empty()) masks = extract_patches(d.mask, size, overlap);
    for (std::size_t i = 0; i < images.size(); ++i) {
      LabeledPatch p;
      p.image = std::move(images[i].data);
      if (!masks.empty()) p.mask = std::move(masks[i].data);
      p.domain_id = id;
      p.x = images[i].x;
      p.y = images[i].y;
      set.patches.push_back(std::move(p));
    }
  }
  return set;
}

}  // namespace daug
