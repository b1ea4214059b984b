#include "memharness/costing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace memharness::costing {

namespace {

double price_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("pricing is missing '") + key + "'");
  double v = j.at(key).get<double>();
  if (!(v >= 0)) throw ConfigError(std::string("price '") + key + "' must be non-negative");
  return v;
}

std::size_t index(Category c) { return static_cast<std::size_t>(c); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

PricingModel PricingModel::from_json(const nlohmann::json& j) {
  PricingModel p;
  try {
    p.vcpu_per_hour = price_field(j, "vcpu_per_hour");
    p.ram_gb_per_hour = price_field(j, "ram_gb_per_hour");
    p.storage_gb_per_hour = price_field(j, "storage_gb_per_hour");
    p.network_per_gb = price_field(j, "network_per_gb");
    if (j.contains("token_prices")) {
      for (const auto& [model, prices] : j.at("token_prices").items()) {
        p.token_prices[model] = {price_field(prices, "input_per_1k"), price_field(prices, "output_per_1k")};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad pricing config: ") + e.what());
  }
  return p;
}

PricingModel PricingModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open pricing file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("pricing file " + path.string() + ": " + e.what());
  }
}

nlohmann::json PricingModel::to_json() const {
  nlohmann::json tokens = nlohmann::json::object();
  for (const auto& [model, price] : token_prices) {
    tokens[model] = {{"input_per_1k", price.input_per_1k}, {"output_per_1k", price.output_per_1k}};
  }
  return {{"vcpu_per_hour", vcpu_per_hour},
          {"ram_gb_per_hour", ram_gb_per_hour},
          {"storage_gb_per_hour", storage_gb_per_hour},
          {"network_per_gb", network_per_gb},
          {"token_prices", tokens}};
}

std::string to_string(Category c) {
  switch (c) {
    case Category::compute: return "compute";
    case Category::ram: return "ram";
    case Category::storage: return "storage";
    case Category::network: return "network";
    case Category::tokens: return "tokens";
  }
  return "compute";
}

double CostBreakdown::cell(Tier t, Category c) const {
  auto it = cells.find(t);
  return it == cells.end() ? 0.0 : it->second[index(c)];
}

double& CostBreakdown::cell(Tier t, Category c) {
  auto [it, inserted] = cells.try_emplace(t);
  if (inserted) it->second.fill(0.0);
  return it->second[index(c)];
}

double CostBreakdown::tier_total(Tier t) const {
  double sum = 0;
  for (auto c : kCategories) sum += cell(t, c);
  return sum;
}

double CostBreakdown::category_total(Category c) const {
  double sum = 0;
  for (const auto& [tier, row] : cells) sum += row[index(c)];
  return sum;
}

double CostBreakdown::total() const {
  double sum = 0;
  for (const auto& [tier, row] : cells) {
    for (double v : row) sum += v;
  }
  return sum;
}

nlohmann::json CostBreakdown::to_json() const {
  nlohmann::json tiers = nlohmann::json::object();
  for (auto tier : {Tier::cloud, Tier::edge}) {
    nlohmann::json row = nlohmann::json::object();
    for (auto c : kCategories) row[to_string(c)] = cell(tier, c);
    row["total"] = tier_total(tier);
    tiers[telemetry::to_string(tier)] = row;
  }
  return {{"tiers", tiers}, {"total_usd", total()}};
}

CostBreakdown compute_cost(const telemetry::MetricsTable& table, const TierTokenUsage& usage,
                           const PricingModel& pricing) {
  CostBreakdown out;
  for (auto tier : {Tier::cloud, Tier::edge}) out.cell(tier, Category::compute) = 0;
  for (const auto& row : table.rows) {
    const double hours = row.duration_minutes / 60.0;
    out.cell(row.tier, Category::compute) += row.cpu_minutes / 60.0 * pricing.vcpu_per_hour;
    out.cell(row.tier, Category::ram) += row.ram_mb / 1024.0 * hours * pricing.ram_gb_per_hour;
    out.cell(row.tier, Category::storage) += row.disk_mb / 1024.0 * hours * pricing.storage_gb_per_hour;
    out.cell(row.tier, Category::network) += row.network_mb / 1024.0 * pricing.network_per_gb;
  }
  for (const auto& [tier, models] : usage) {
    for (const auto& m : models) {
      if (m.usage.total_tokens == 0 && m.usage.prompt_tokens == 0 && m.usage.completion_tokens == 0) continue;
      auto it = pricing.token_prices.find(m.model);
      if (it == pricing.token_prices.end()) throw MissingPrice("no token price for model '" + m.model + "'");
      out.cell(tier, Category::tokens) += static_cast<double>(m.usage.prompt_tokens) / 1000.0 * it->second.input_per_1k +
                                          static_cast<double>(m.usage.completion_tokens) / 1000.0 * it->second.output_per_1k;
    }
  }
  return out;
}

nlohmann::json TcoComparison::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [c, d] : category_delta) cats[to_string(c)] = opt(d);
  nlohmann::json tiers = nlohmann::json::object();
  for (const auto& [t, d] : tier_delta) tiers[telemetry::to_string(t)] = opt(d);
  return {{"total_a_usd", total_a},
          {"total_b_usd", total_b},
          {"total_delta", opt(total_delta)},
          {"category_delta", cats},
          {"tier_delta", tiers},
          {"convention", "(b - a) / a; null when a is zero"}};
}

TcoComparison tco_compare(const CostBreakdown& a, const CostBreakdown& b) {
  auto delta = [](double x, double y) -> std::optional<double> {
    if (x == 0.0) return std::nullopt;
    return (y - x) / x;
  };
  TcoComparison out;
  for (auto c : kCategories) out.category_delta[c] = delta(a.category_total(c), b.category_total(c));
  for (auto t : {Tier::cloud, Tier::edge}) out.tier_delta[t] = delta(a.tier_total(t), b.tier_total(t));
  out.total_a = a.total();
  out.total_b = b.total();
  out.total_delta = delta(out.total_a, out.total_b);
  return out;
}

std::string render_cost_svg(const std::vector<std::pair<std::string, CostBreakdown>>& systems,
                            const std::string& title) {
  constexpr double kWidthPerGroup = 70, kBar = 14, kLeft = 70, kTop = 40, kPlotH = 260;
  const double width = kLeft + 20 + kWidthPerGroup * static_cast<double>(kCategories.size() * std::max<std::size_t>(systems.size(), 1));
  const double height = kTop + kPlotH + 70;

  // Log axis spans whole decades around the positive values.
  double lo = 1e300, hi = 0;
  for (const auto& [name, cb] : systems) {
    for (auto tier : {Tier::cloud, Tier::edge}) {
      for (auto c : kCategories) {
        double v = cb.cell(tier, c);
        if (v > 0) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    }
  }
  if (hi == 0) {
    lo = 1e-4;
    hi = 1;
  }
  const double dlo = std::floor(std::log10(lo)), dhi = std::max(std::ceil(std::log10(hi)), dlo + 1);
  auto y_of = [&](double v) { return kTop + kPlotH - (std::log10(v) - dlo) / (dhi - dlo) * kPlotH; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (double d = dlo; d <= dhi; d += 1) {
    double y = kTop + kPlotH - (d - dlo) / (dhi - dlo) * kPlotH;
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << width - 10 << "\" y1=\"" << y << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">1e" << static_cast<int>(d) << "</text>\n";
  }
  double x = kLeft + 10;
  for (const auto& [name, cb] : systems) {
    for (auto c : kCategories) {
      int slot = 0;
      for (auto tier : {Tier::cloud, Tier::edge}) {
        double v = cb.cell(tier, c);
        if (v > 0) {
          double y = y_of(std::max(v, std::pow(10.0, dlo)));
          svg << "<rect x=\"" << x + slot * kBar << "\" y=\"" << y << "\" width=\"" << kBar - 2 << "\" height=\""
              << kTop + kPlotH - y << "\" fill=\"" << (tier == Tier::cloud ? "#1f77b4" : "#ff7f0e") << "\"><title>"
              << name << " " << to_string(c) << " " << telemetry::to_string(tier) << " $" << fmt("%.6f", v)
              << "</title></rect>\n";
        }
        ++slot;
      }
      svg << "<text x=\"" << x + kBar << "\" y=\"" << kTop + kPlotH + 14
          << "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">" << to_string(c) << "</text>\n";
      x += kWidthPerGroup;
    }
    svg << "<text x=\"" << x - kWidthPerGroup * kCategories.size() / 2.0 << "\" y=\"" << kTop + kPlotH + 32
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << name << "</text>\n";
  }
  svg << "<rect x=\"" << kLeft << "\" y=\"" << height - 22 << "\" width=\"10\" height=\"10\" fill=\"#1f77b4\"/>"
      << "<text x=\"" << kLeft + 14 << "\" y=\"" << height - 13 << "\" font-family=\"sans-serif\" font-size=\"10\">cloud</text>"
      << "<rect x=\"" << kLeft + 60 << "\" y=\"" << height - 22 << "\" width=\"10\" height=\"10\" fill=\"#ff7f0e\"/>"
      << "<text x=\"" << kLeft + 74 << "\" y=\"" << height - 13 << "\" font-family=\"sans-serif\" font-size=\"10\">edge</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace memharness::costing
