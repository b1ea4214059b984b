#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace memharness::memory {

using Vector = std::vector<double>;

// Maps text to a unit-length vector. Implementations must be safe for
// concurrent calls. Throws EmptyText for blank input.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Feature-hashed bag of character trigrams over the lowercased,
// whitespace-collapsed text padded with one space on each side. Each
// trigram adds +1 or -1 (by hash sign bit) to bucket hash % dimension.
class HashingEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit HashingEmbedder(std::size_t dimension = kDefaultDimension);

  Vector embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
};

// 64-bit FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes);

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace memharness::memory
