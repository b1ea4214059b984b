#include <doctest.h>

#include <random>

#include "memharness/costing.hpp"
#include "test_support.hpp"

using namespace memharness;
using namespace memharness::costing;
using telemetry::MetricsRow;
using telemetry::MetricsTable;
using telemetry::Phase;

namespace {

MetricsRow row(Tier tier, double cpu, double ram, double disk, double net, double minutes,
               Phase phase = Phase::loading) {
  MetricsRow r;
  r.tier = tier;
  r.phase = phase;
  r.cpu_minutes = cpu;
  r.ram_mb = ram;
  r.disk_mb = disk;
  r.network_mb = net;
  r.duration_minutes = minutes;
  return r;
}

PricingModel unit_prices() {
  PricingModel p;
  p.token_prices["m"] = {0.5, 1.5};
  return p;
}

}  // namespace

TEST_CASE("published unit prices as defaults and in the shipped config") {
  PricingModel d;
  CHECK(d.vcpu_per_hour == 0.04048);
  CHECK(d.ram_gb_per_hour == 0.004445);
  CHECK(d.storage_gb_per_hour == 0.000109);
  CHECK(d.network_per_gb == 0.09);
  auto shipped = PricingModel::load(test_support::source_dir() / "config" / "pricing.json");
  CHECK(shipped.vcpu_per_hour == 0.04048);
  CHECK(shipped.network_per_gb == 0.09);
  CHECK(shipped.token_prices.count("mock") == 1);

  auto j = shipped.to_json();
  auto again = PricingModel::from_json(j);
  CHECK(again.to_json() == j);
  j["vcpu_per_hour"] = -1;
  CHECK_THROWS_AS(PricingModel::from_json(j), ConfigError);
  CHECK_THROWS_AS(PricingModel::from_json(nlohmann::json::object()), ConfigError);
}

TEST_CASE("cost examples") {
  auto p = unit_prices();
  MetricsTable cpu{{row(Tier::cloud, 17.1, 0, 0, 0, 0)}};
  CHECK(compute_cost(cpu, {}, p).cell(Tier::cloud, Category::compute) == doctest::Approx(0.011537).epsilon(1e-4));

  MetricsTable net{{row(Tier::cloud, 0, 0, 0, 1332.3, 0)}};
  CHECK(compute_cost(net, {}, p).cell(Tier::cloud, Category::network) == doctest::Approx(0.1171).epsilon(1e-3));

  MetricsTable zero{{row(Tier::cloud, 0, 0, 0, 0, 10), row(Tier::edge, 0, 0, 0, 0, 10)}};
  auto z = compute_cost(zero, {}, p);
  for (auto t : {Tier::cloud, Tier::edge})
    for (auto c : kCategories) CHECK(z.cell(t, c) == 0.0);
  CHECK(z.total() == 0.0);

  // RAM and storage are GB-hours: 1024 MB for 60 minutes
  MetricsTable occ{{row(Tier::edge, 0, 1024, 2048, 0, 60)}};
  auto o = compute_cost(occ, {}, p);
  CHECK(o.cell(Tier::edge, Category::ram) == doctest::Approx(0.004445));
  CHECK(o.cell(Tier::edge, Category::storage) == doctest::Approx(2 * 0.000109));

  TierTokenUsage tokens{{Tier::edge, {{"m", llm::TokenUsage::of(2000, 1000)}}}};
  CHECK(compute_cost({}, tokens, p).cell(Tier::edge, Category::tokens) == doctest::Approx(2 * 0.5 + 1.5));

  TierTokenUsage unpriced{{Tier::cloud, {{"qwen-unknown", llm::TokenUsage::of(1, 1)}}}};
  CHECK_THROWS_AS(compute_cost({}, unpriced, p), MissingPrice);
  TierTokenUsage unused{{Tier::cloud, {{"qwen-unknown", {}}}}};
  CHECK_NOTHROW(compute_cost({}, unused, p));
}

TEST_CASE("tco comparison") {
  CostBreakdown a, b;
  a.cell(Tier::cloud, Category::compute) = 0.6;
  a.cell(Tier::edge, Category::tokens) = 0.4;
  auto same = tco_compare(a, a);
  CHECK(*same.total_delta == 0.0);
  for (const auto& [c, d] : same.category_delta) {
    if (d) CHECK(*d == 0.0);
  }

  b.cell(Tier::cloud, Category::compute) = 1.002;
  b.cell(Tier::edge, Category::tokens) = 0.4;
  auto cmp = tco_compare(a, b);
  CHECK(*cmp.total_delta == doctest::Approx(0.402));
  CHECK(cmp.total_a == doctest::Approx(1.0));
  CHECK(cmp.total_b == doctest::Approx(1.402));
  CHECK_FALSE(cmp.category_delta.at(Category::ram).has_value());  // 0 -> undefined

  CostBreakdown empty;
  CHECK_FALSE(tco_compare(empty, a).total_delta.has_value());
  CHECK(tco_compare(empty, a).to_json().at("total_delta").is_null());
}

TEST_CASE("fixture comparison against a hand spreadsheet") {
  // Two loading rows per system; totals recomputed by hand from the formulas.
  auto p = unit_prices();
  MetricsTable a{{row(Tier::cloud, 3.0, 512, 1, 100, 30), row(Tier::edge, 1.5, 2048, 10, 50, 30)}};
  MetricsTable b{{row(Tier::cloud, 6.0, 512, 1, 300, 45), row(Tier::edge, 1.5, 1024, 5, 50, 45)}};
  auto hand = [](double cpu, double ram_mb, double disk_mb, double net_mb, double minutes) {
    double h = minutes / 60;
    return cpu / 60 * 0.04048 + ram_mb / 1024 * h * 0.004445 + disk_mb / 1024 * h * 0.000109 + net_mb / 1024 * 0.09;
  };
  double ta = hand(3.0, 512, 1, 100, 30) + hand(1.5, 2048, 10, 50, 30);
  double tb = hand(6.0, 512, 1, 300, 45) + hand(1.5, 1024, 5, 50, 45);
  auto cmp = tco_compare(compute_cost(a, {}, p), compute_cost(b, {}, p));
  CHECK(cmp.total_a == doctest::Approx(ta));
  CHECK(cmp.total_b == doctest::Approx(tb));
  CHECK(*cmp.total_delta == doctest::Approx((tb - ta) / ta));
}

TEST_CASE("property: linearity, monotonicity, tier additivity") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 500);
  auto p = unit_prices();
  for (int iter = 0; iter < 500; ++iter) {
    MetricsTable t;
    int rows = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < rows; ++i) {
      t.rows.push_back(row((rng() % 2) ? Tier::cloud : Tier::edge, u(rng), u(rng), u(rng), u(rng), u(rng),
                           (rng() % 2) ? Phase::qa : Phase::loading));
    }
    TierTokenUsage tokens{{Tier::edge, {{"m", llm::TokenUsage::of(rng() % 100000, rng() % 100000)}}}};
    auto base = compute_cost(t, tokens, p);

    // resources scale, the window length stays put
    double c = 0.25 + u(rng) / 100;
    MetricsTable scaled = t;
    for (auto& r : scaled.rows) {
      r.cpu_minutes *= c;
      r.ram_mb *= c;
      r.disk_mb *= c;
      r.network_mb *= c;
    }
    auto s = compute_cost(scaled, {}, p);
    auto base_no_tokens = compute_cost(t, {}, p);
    for (auto tier : {Tier::cloud, Tier::edge})
      for (auto cat : kCategories)
        CHECK(s.cell(tier, cat) == doctest::Approx(c * base_no_tokens.cell(tier, cat)).epsilon(1e-9));

    // bump one resource of one row
    MetricsTable bumped = t;
    auto& r = bumped.rows[rng() % bumped.rows.size()];
    double extra = u(rng);
    switch (rng() % 5) {
      case 0: r.cpu_minutes += extra; break;
      case 1: r.ram_mb += extra; break;
      case 2: r.disk_mb += extra; break;
      case 3: r.network_mb += extra; break;
      default: r.duration_minutes += extra; break;
    }
    auto m = compute_cost(bumped, tokens, p);
    for (auto tier : {Tier::cloud, Tier::edge})
      for (auto cat : kCategories) CHECK(m.cell(tier, cat) >= base.cell(tier, cat));

    CHECK(base.tier_total(Tier::cloud) + base.tier_total(Tier::edge) == doctest::Approx(base.total()));
    double by_cat = 0;
    for (auto cat : kCategories) by_cat += base.category_total(cat);
    CHECK(by_cat == doctest::Approx(base.total()));
  }
}

TEST_CASE("cost json and svg") {
  CostBreakdown a;
  a.cell(Tier::cloud, Category::compute) = 0.0115;
  a.cell(Tier::edge, Category::tokens) = 0.43;
  auto j = a.to_json();
  CHECK(j.at("tiers").at("cloud").at("compute") == 0.0115);
  CHECK(j.at("total_usd") == doctest::Approx(0.4415));
  auto svg = render_cost_svg({{"mem0", a}, {"Graphiti", a}}, "Cost");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("#1f77b4") != std::string::npos);
  CHECK(svg.find("Graphiti") != std::string::npos);
}
