#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "memharness/embedding.hpp"
#include "memharness/error.hpp"

namespace memharness::evaluation {

inline constexpr double kDefaultThreshold = 0.7;
inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kZ95 = 1.959963984540054;

// 1 - Levenshtein(a, b) / max(|a|, |b|) over lowercased, whitespace-collapsed
// strings. Two empty strings are identical (1.0).
double string_similarity(std::string_view expected, std::string_view received);
std::size_t levenshtein(std::string_view a, std::string_view b);

// (1 + cos) / 2. EmptyText propagates from the embedder.
double semantic_similarity(std::string_view expected, std::string_view received, const memory::Embedder& embedder);

struct SimilarityScore {
  double string_sim = 0;
  double semantic_sim = 0;
  double final = 0;
};

SimilarityScore similarity(std::string_view expected, std::string_view received, const memory::Embedder& embedder);

enum class Classification { correct, wrong, idk };
std::string to_string(Classification c);

bool is_idk(std::string_view received);

struct Scored {
  Classification classification = Classification::wrong;
  SimilarityScore similarity;
};

// idk when the received text contains the IDK sentence (case-insensitive),
// regardless of threshold; otherwise correct iff final >= threshold. A blank
// answer is wrong.
Scored classify(std::string_view expected, std::string_view received, double threshold,
                const memory::Embedder& embedder);

struct AccuracyStats {
  std::uint64_t n = 0;
  std::uint64_t correct = 0;
  std::uint64_t wrong = 0;
  std::uint64_t idk = 0;

  // Throws InvalidCounts when the parts do not add up to n or n is 0.
  static AccuracyStats from_counts(std::uint64_t correct, std::uint64_t wrong, std::uint64_t idk);

  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(n); }
  double idk_rate() const { return static_cast<double>(idk) / static_cast<double>(n); }
  double answer_rate() const { return 1.0 - idk_rate(); }
  void add(Classification c);

  nlohmann::json to_json() const;
};

struct ConfidenceInterval {
  double low = 0;
  double high = 0;
  double level = 0.95;
};

// Wilson score interval. Throws InvalidCounts unless 0 <= k <= n and n > 0.
ConfidenceInterval wilson_ci(std::uint64_t k, std::uint64_t n, double z = kZ95);

double normal_cdf(double x);

struct ZTest {
  double z = 0;
  double p = 1;
  bool degenerate = false;  // pooled proportion was 0 or 1
};

// Pooled two-proportion z-test, two-sided, no continuity correction.
ZTest two_prop_z(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2, std::uint64_t n2);

struct SystemSummary {
  std::string name;
  double cost = 0;
  std::uint64_t correct = 0;
  std::uint64_t n = 0;
};

struct ParetoVerdict {
  std::optional<std::string> dominant;
  bool financial_dominance = false;      // one system strictly cheaper
  bool statistical_equivalence = false;  // p >= alpha
  bool accuracy_superiority = false;     // cheaper one also significantly more accurate
  double p_value = 1;
  double z = 0;

  nlohmann::json to_json() const;
};

// The cheaper system dominates when accuracies are statistically
// equivalent, or when it is also significantly more accurate. Anything
// else is a trade-off with no dominant system.
ParetoVerdict pareto_decision(const SystemSummary& a, const SystemSummary& b, double alpha = kDefaultAlpha);

}  // namespace memharness::evaluation
