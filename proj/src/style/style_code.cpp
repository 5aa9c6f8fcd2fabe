#include "daug/style/style_code.hpp"

#include <algorithm>

#include "daug/nn/error.hpp"
#include "daug/nn/rng.hpp"

namespace daug {

StyleCode StyleCode::random(std::uint64_t seed) {
  Rng rng(seed);
  StyleCode code;
  for (float& v : code.gamma_) v = rng.uniform();
  for (float& v : code.beta_) v = rng.uniform();
  return code;
}

StyleCode StyleCode::from_values(std::span<const float> gamma, std::span<const float> beta) {
  if (gamma.size() != kEmbeddingChannels || beta.size() != kEmbeddingChannels) {
    throw DimensionError("style code vectors must hold exactly " + std::to_string(kEmbeddingChannels) + " values");
  }
  auto in_range = [](float v) { return v >= 0.0f && v < 1.0f; };
  if (!std::all_of(gamma.begin(), gamma.end(), in_range) || !std::all_of(beta.begin(), beta.end(), in_range)) {
    throw ValueError("style code values must lie in [0, 1)");
  }
  StyleCode code;
  std::copy(gamma.begin(), gamma.end(), code.gamma_.begin());
  std::copy(beta.begin(), beta.end(), code.beta_.begin());
  return code;
}

Tensor4 StyleCode::gamma_tensor() const {
  return Tensor4({1, kEmbeddingChannels, 1, 1}, std::vector<float>(gamma_.begin(), gamma_.end()));
}

Tensor4 StyleCode::beta_tensor() const {
  return Tensor4({1, kEmbeddingChannels, 1, 1}, std::vector<float>(beta_.begin(), beta_.end()));
}

std::pair<Tensor4, Tensor4> stack_codes(std::span<const StyleCode* const> codes) {
  const int n = static_cast<int>(codes.size());
  Tensor4 gamma({n, kEmbeddingChannels, 1, 1});
  Tensor4 beta({n, kEmbeddingChannels, 1, 1});
  for (int i = 0; i < n; ++i) {
    std::copy(codes[i]->gamma().begin(), codes[i]->gamma().end(), gamma.plane(i, 0));
    std::copy(codes[i]->beta().begin(), codes[i]->beta().end(), beta.plane(i, 0));
  }
  return {std::move(gamma), std::move(beta)};
}

std::string to_string(DomainRole role) { return role == DomainRole::Source ? "source" : "target"; }

DomainRole parse_role(const std::string& text) {
  if (text == "source") return DomainRole::Source;
  if (text == "target") return DomainRole::Target;
  throw ValueError("unknown domain role '" + text + "' (expected source or target)");
}

int DomainRegistry::add(const std::string& name, DomainRole role, std::uint64_t code_seed) {
  return add(name, role, StyleCode::random(code_seed));
}

int DomainRegistry::add(const std::string& name, DomainRole role, const StyleCode& code) {
  if (name.empty()) throw RegistryError("domain name must not be empty");
  if (contains(name)) throw RegistryError("domain '" + name + "' is already registered");
  const int id = size();
  entries_.push_back(DomainEntry{name, role, code, id});
  return id;
}

const DomainEntry& DomainRegistry::at(int head_id) const {
  if (head_id < 0 || head_id >= size()) {
    throw RegistryError("head id " + std::to_string(head_id) + " is not registered (registry holds " +
                        std::to_string(size()) + " domains)");
  }
  return entries_[static_cast<std::size_t>(head_id)];
}

const DomainEntry& DomainRegistry::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw RegistryError("unknown domain '" + name + "'");
}

bool DomainRegistry::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const DomainEntry& e) { return e.name == name; });
}

int DomainRegistry::count(DomainRole role) const {
  return static_cast<int>(std::count_if(entries_.begin(), entries_.end(), [&](const DomainEntry& e) { return e.role == role; }));
}

}  // namespace daug
