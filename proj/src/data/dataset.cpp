#include "daug/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "daug/data/image_io.hpp"
#include "daug/nn/error.hpp"

namespace daug {

namespace fs = std::filesystem;

namespace {

fs::path mask_path(const fs::path& dir, int c) {
  return dir / (std::string("mask_") + kClassNames[c] + ".pgm");
}

}  // namespace

void save_dataset(const fs::path& root, std::span<const DomainImage> domains) {
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["domains"] = nlohmann::json::array();
  for (const DomainImage& d : domains) {
    const fs::path dir = root / d.name;
    fs::create_directories(dir);
    save_image(dir / "image.ppm", d.image);
    if (!d.mask.empty()) {
      for (int c = 0; c < kClassCount; ++c) save_mask(mask_path(dir, c), d.mask, c);
    }
    manifest["domains"].push_back({{"name", d.name}, {"role", to_string(d.role)}});
  }
  std::ofstream out(root / "domains.json");
  if (!out) throw IoError("cannot write " + (root / "domains.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<DomainImage> load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "domains.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  std::vector<DomainImage> out;
  for (const auto& entry : manifest.at("domains")) {
    DomainImage d;
    d.name = entry.at("name").get<std::string>();
    d.role = parse_role(entry.at("role").get<std::string>());
    const fs::path dir = root / d.name;
    d.image = load_image(dir / "image.ppm");
    int present = 0;
    for (int c = 0; c < kClassCount; ++c) present += fs::exists(mask_path(dir, c)) ? 1 : 0;
    if (present != 0 && present != kClassCount) throw IoError("domain " + d.name + ": incomplete set of mask files");
    if (present == kClassCount) {
      d.mask = Tensor4({1, kClassCount, d.image.h(), d.image.w()});
      for (int c = 0; c < kClassCount; ++c) {
        const Tensor4 m = load_mask(mask_path(dir, c));
        if (m.h() != d.image.h() || m.w() != d.image.w()) {
          throw DimensionError("domain " + d.name + ": mask size differs from image size");
        }
        std::copy(m.data().begin(), m.data().end(), d.mask.plane(0, c));
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

DomainRegistry registry_for(std::span<const DomainImage> domains, std::uint64_t seed) {
  DomainRegistry r;
  for (std::size_t i = 0; i < domains.size(); ++i) r.add(domains[i].name, domains[i].role, derive_seed(seed, i));
  return r;
}

}  // namespace daug
