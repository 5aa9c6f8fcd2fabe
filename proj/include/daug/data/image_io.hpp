#pragma once

#include <filesystem>

#include "daug/nn/tensor.hpp"

namespace daug {

/// 8-bit binary PPM (P6) -> (1,3,H,W) with v / 127.5 - 1.
Tensor4 load_image(const std::filesystem::path& path);

/// (1,3,H,W) in [-1,1] -> binary PPM, round((x + 1) * 127.5) with halves up,
/// clamped to [0,255].
void save_image(const std::filesystem::path& path, const Tensor4& image);

/// 8-bit binary PGM (P5) with values in {0,255} -> (1,1,H,W) in {0,1}.
Tensor4 load_mask(const std::filesystem::path& path);

/// Channel `channel` of a {0,1} mask -> PGM with values {0,255}.
void save_mask(const std::filesystem::path& path, const Tensor4& mask, int channel = 0);

/// Byte quantisation used by save_image.
unsigned char to_byte(float x);
inline float from_byte(unsigned char b) { return static_cast<float>(b) / 127.5f - 1.0f; }

}  // namespace daug
