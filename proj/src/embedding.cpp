#include "memharness/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memharness/error.hpp"
#include "memharness/text.hpp"

namespace memharness::memory {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

Vector HashingEmbedder::embed(std::string_view input) const {
  auto norm = text::normalize_space_lower(input);
  if (norm.empty()) throw EmptyText("cannot embed empty text");
  std::string padded = " " + norm + " ";

  Vector v(dimension_, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    auto h = fnv1a64(std::string_view(padded).substr(i, 3));
    v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = std::sqrt(dot(v, v));
  if (n == 0.0) {
    // Every trigram cancelled out; fall back to a fixed direction.
    v[fnv1a64(norm) % dimension_] = 1.0;
    return v;
  }
  for (auto& x : v) x /= n;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double na = std::sqrt(dot(a, a));
  double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace memharness::memory
