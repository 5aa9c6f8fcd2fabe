#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "daug/nn/tensor.hpp"

namespace daug {

inline constexpr std::uint32_t kTensorFileVersion = 1;

/// Named-tensor container.
///
/// Layout (little-endian): "DAUG", u32 version, u32 tensor count; per tensor
/// u32 name length, name bytes, u8 dtype (0 = float32), u32 rank, rank x u32
/// dims, row-major payload; then u32 manifest length and the manifest text.
/// Tensors are written with rank 4; lower ranks are read as leading ones.
struct TensorFile {
  std::vector<std::pair<std::string, Tensor4>> tensors;
  std::string manifest;

  const Tensor4* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);

/// Throws FormatError (bad magic, dtype, rank, duplicate name), VersionError
/// or TruncatedError.
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace daug
