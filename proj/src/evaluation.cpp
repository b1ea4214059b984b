#include "memharness/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "memharness/prompts.hpp"
#include "memharness/text.hpp"

namespace memharness::evaluation {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double string_similarity(std::string_view expected, std::string_view received) {
  auto a = text::trim(text::normalize_space_lower(expected));
  auto b = text::trim(text::normalize_space_lower(received));
  auto longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double semantic_similarity(std::string_view expected, std::string_view received, const memory::Embedder& embedder) {
  auto c = memory::cosine(embedder.embed(expected), embedder.embed(received));
  return std::clamp((1.0 + c) / 2.0, 0.0, 1.0);
}

SimilarityScore similarity(std::string_view expected, std::string_view received, const memory::Embedder& embedder) {
  SimilarityScore s;
  s.string_sim = string_similarity(expected, received);
  s.semantic_sim = semantic_similarity(expected, received, embedder);
  s.final = (s.string_sim + s.semantic_sim) / 2.0;
  return s;
}

std::string to_string(Classification c) {
  switch (c) {
    case Classification::correct: return "correct";
    case Classification::wrong: return "wrong";
    case Classification::idk: return "idk";
  }
  return "wrong";
}

bool is_idk(std::string_view received) {
  return text::to_lower(text::trim(received)).find(text::to_lower(prompts::kIdkAnswer)) != std::string::npos;
}

Scored classify(std::string_view expected, std::string_view received, double threshold,
                const memory::Embedder& embedder) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  Scored out;
  if (is_idk(received)) {
    out.classification = Classification::idk;
    return out;
  }
  if (text::trim(received).empty() || text::trim(expected).empty()) {
    out.similarity.string_sim = string_similarity(expected, received);
    out.similarity.final = out.similarity.string_sim / 2.0;
    out.classification = Classification::wrong;
    return out;
  }
  out.similarity = similarity(expected, received, embedder);
  out.classification = out.similarity.final >= threshold ? Classification::correct : Classification::wrong;
  return out;
}

AccuracyStats AccuracyStats::from_counts(std::uint64_t correct, std::uint64_t wrong, std::uint64_t idk) {
  AccuracyStats s{correct + wrong + idk, correct, wrong, idk};
  if (s.n == 0) throw InvalidCounts("no questions");
  return s;
}

void AccuracyStats::add(Classification c) {
  ++n;
  switch (c) {
    case Classification::correct: ++correct; break;
    case Classification::wrong: ++wrong; break;
    case Classification::idk: ++idk; break;
  }
}

nlohmann::json AccuracyStats::to_json() const {
  nlohmann::json j = {{"n", n}, {"correct", correct}, {"wrong", wrong}, {"idk", idk}};
  if (n > 0) {
    j["accuracy"] = accuracy();
    j["idk_rate"] = idk_rate();
    j["answer_rate"] = answer_rate();
  }
  return j;
}

ConfidenceInterval wilson_ci(std::uint64_t k, std::uint64_t n, double z) {
  if (n == 0 || k > n) {
    throw InvalidCounts("wilson_ci needs 0 <= k <= n and n > 0, got k=" + std::to_string(k) + " n=" + std::to_string(n));
  }
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  ConfidenceInterval ci;
  ci.low = k == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
  ci.high = k == n ? 1.0 : std::clamp(center + half, p, 1.0);
  return ci;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ZTest two_prop_z(std::uint64_t k1, std::uint64_t n1, std::uint64_t k2, std::uint64_t n2) {
  if (n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2) throw InvalidCounts("two_prop_z needs 0 <= k <= n and n > 0");
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  ZTest t;
  if (pooled <= 0.0 || pooled >= 1.0) {
    t.degenerate = true;
    return t;
  }
  // Equal proportions give exactly z = 0 rather than rounding noise.
  if (k1 * n2 == k2 * n1) return t;
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  t.z = (p1 - p2) / se;
  // erfc underflows past |z| ~ 38; the true p is still positive.
  t.p = std::clamp(std::erfc(std::fabs(t.z) / std::sqrt(2.0)), std::numeric_limits<double>::denorm_min(), 1.0);
  return t;
}

nlohmann::json ParetoVerdict::to_json() const {
  return {{"dominant", dominant ? nlohmann::json(*dominant) : nlohmann::json(nullptr)},
          {"rationale",
           {{"financial_dominance", financial_dominance},
            {"statistical_equivalence", statistical_equivalence},
            {"accuracy_superiority", accuracy_superiority}}},
          {"z", z},
          {"p_value", p_value}};
}

ParetoVerdict pareto_decision(const SystemSummary& a, const SystemSummary& b, double alpha) {
  if (a.cost < 0 || b.cost < 0) throw InvalidCounts("costs must be non-negative");
  auto test = two_prop_z(a.correct, a.n, b.correct, b.n);
  ParetoVerdict v;
  v.z = test.z;
  v.p_value = test.p;
  v.statistical_equivalence = test.p >= alpha;
  if (a.cost == b.cost) return v;
  v.financial_dominance = true;
  const bool a_cheaper = a.cost < b.cost;
  const auto& cheaper = a_cheaper ? a : b;
  const auto& dearer = a_cheaper ? b : a;
  if (v.statistical_equivalence) {
    v.dominant = cheaper.name;
    return v;
  }
  double acc_cheap = static_cast<double>(cheaper.correct) / static_cast<double>(cheaper.n);
  double acc_dear = static_cast<double>(dearer.correct) / static_cast<double>(dearer.n);
  if (acc_cheap > acc_dear) {
    v.accuracy_superiority = true;
    v.dominant = cheaper.name;
  }
  return v;
}

}  // namespace memharness::evaluation
