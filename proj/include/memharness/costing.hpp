#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memharness/error.hpp"
#include "memharness/llm.hpp"
#include "memharness/telemetry.hpp"

namespace memharness::costing {

using telemetry::Tier;

struct TokenPrice {
  double input_per_1k = 0;
  double output_per_1k = 0;
};

struct PricingModel {
  double vcpu_per_hour = 0.04048;
  double ram_gb_per_hour = 0.004445;
  double storage_gb_per_hour = 0.000109;
  double network_per_gb = 0.09;
  std::map<std::string, TokenPrice> token_prices;

  // Throws ConfigError on negative prices or missing fields.
  static PricingModel from_json(const nlohmann::json& j);
  static PricingModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

enum class Category { compute, ram, storage, network, tokens };
inline constexpr std::array<Category, 5> kCategories = {Category::compute, Category::ram, Category::storage,
                                                        Category::network, Category::tokens};
std::string to_string(Category c);

// Token usage billed to a tier under one model's price.
struct ModelUsage {
  std::string model;
  llm::TokenUsage usage;
};
using TierTokenUsage = std::map<Tier, std::vector<ModelUsage>>;

struct CostBreakdown {
  std::map<Tier, std::array<double, 5>> cells;  // indexed by Category

  double cell(Tier t, Category c) const;
  double& cell(Tier t, Category c);
  double tier_total(Tier t) const;
  double category_total(Category c) const;
  double total() const;

  nlohmann::json to_json() const;
};

// compute = cpu_minutes / 60 * vcpu_per_hour
// ram     = ram_mb / 1024 * duration_hours * ram_gb_per_hour
// storage = disk_mb / 1024 * duration_hours * storage_gb_per_hour
// network = network_mb / 1024 * network_per_gb
// tokens  = prompt / 1000 * input_per_1k + completion / 1000 * output_per_1k
// Rows of every phase are summed. Throws MissingPrice for an unpriced model.
CostBreakdown compute_cost(const telemetry::MetricsTable& table, const TierTokenUsage& usage,
                           const PricingModel& pricing);

struct TcoComparison {
  // (b - a) / a; nullopt when a is zero.
  std::map<Category, std::optional<double>> category_delta;
  std::map<Tier, std::optional<double>> tier_delta;
  std::optional<double> total_delta;
  double total_a = 0;
  double total_b = 0;

  nlohmann::json to_json() const;
};

TcoComparison tco_compare(const CostBreakdown& a, const CostBreakdown& b);

// Grouped bars per system and category, cloud and edge side by side, on a
// log10 value axis.
std::string render_cost_svg(const std::vector<std::pair<std::string, CostBreakdown>>& systems,
                            const std::string& title);

}  // namespace memharness::costing
