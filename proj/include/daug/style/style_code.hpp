#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daug/nn/tensor.hpp"

namespace daug {

/// Width of the generator embedding and of each style vector.
inline constexpr int kEmbeddingChannels = 128;

/// Fixed random appearance code of one domain: AdaIN gain and bias.
///
/// Drawn once, i.i.d. uniform in [0, 1), and never trained.
class StyleCode {
 public:
  using Vector = std::array<float, kEmbeddingChannels>;

  /// Draws gamma then beta from a generator seeded with `seed`.
  static StyleCode random(std::uint64_t seed);

  /// Rebuilds a persisted code; every value must lie in [0, 1).
  static StyleCode from_values(std::span<const float> gamma, std::span<const float> beta);

  const Vector& gamma() const { return gamma_; }
  const Vector& beta() const { return beta_; }

  /// (1, 128, 1, 1) views for the adain op.
  Tensor4 gamma_tensor() const;
  Tensor4 beta_tensor() const;

  friend bool operator==(const StyleCode&, const StyleCode&) = default;

 private:
  StyleCode() = default;

  Vector gamma_{};
  Vector beta_{};
};

/// Stacks per-sample codes into (N, 128, 1, 1) gamma and beta tensors.
std::pair<Tensor4, Tensor4> stack_codes(std::span<const StyleCode* const> codes);

enum class DomainRole { Source, Target };

std::string to_string(DomainRole role);
DomainRole parse_role(const std::string& text);

struct DomainEntry {
  std::string name;
  DomainRole role = DomainRole::Source;
  StyleCode code;
  int head_id = 0;

  friend bool operator==(const DomainEntry&, const DomainEntry&) = default;
};

/// Ordered set of domains. Head ids are dense and follow insertion order.
class DomainRegistry {
 public:
  /// Appends a domain with the code drawn from `code_seed`; returns its head id.
  int add(const std::string& name, DomainRole role, std::uint64_t code_seed);

  /// Appends a domain with a known code (checkpoint restore).
  int add(const std::string& name, DomainRole role, const StyleCode& code);

  const DomainEntry& at(int head_id) const;
  const DomainEntry& find(const std::string& name) const;
  bool contains(const std::string& name) const;
  int head_of(const std::string& name) const { return find(name).head_id; }

  int size() const { return static_cast<int>(entries_.size()); }
  int count(DomainRole role) const;
  const std::vector<DomainEntry>& entries() const { return entries_; }

  friend bool operator==(const DomainRegistry&, const DomainRegistry&) = default;

 private:
  std::vector<DomainEntry> entries_;
};

}  // namespace daug
