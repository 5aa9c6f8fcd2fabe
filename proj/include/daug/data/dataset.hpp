#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "daug/data/patches.hpp"

namespace daug {

/// Writes <root>/<domain>/image.ppm, mask_{building,road,tree}.pgm (when the
/// domain has a mask) and <root>/domains.json listing names and roles.
void save_dataset(const std::filesystem::path& root, std::span<const DomainImage> domains);

/// Reads a dataset written by save_dataset. Mask files are optional per
/// domain but must come as a complete set.
std::vector<DomainImage> load_dataset(const std::filesystem::path& root);

/// Registry with one entry per dataset domain, codes from derive_seed(seed, i).
DomainRegistry registry_for(std::span<const DomainImage> domains, std::uint64_t seed);

}  // namespace daug
