#include <cstdio>
#include <sstream>

#include "memharness/experiment.hpp"

namespace memharness::experiment {

namespace {

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string pct(double v) { return f("%.1f%%", 100.0 * v); }
std::string usd(double v) { return "$" + f("%.6f", v); }

std::string opt_pct(const nlohmann::json& v) { return v.is_null() ? "undefined" : f("%+.1f%%", 100.0 * v.get<double>()); }

void cost_table(std::ostringstream& md, const std::vector<std::pair<std::string, nlohmann::json>>& rows) {
  md << "| cell | tier | compute | ram | storage | network | tokens | total |\n";
  md << "|---|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& [label, breakdown] : rows) {
    for (const char* tier : {"cloud", "edge"}) {
      const auto& t = breakdown.at("tiers").at(tier);
      md << "| " << label << " | " << tier << " | " << usd(t.at("compute")) << " | " << usd(t.at("ram")) << " | "
         << usd(t.at("storage")) << " | " << usd(t.at("network")) << " | " << usd(t.at("tokens")) << " | "
         << usd(t.at("total")) << " |\n";
    }
    md << "| " << label << " | all | | | | | | " << usd(breakdown.at("total_usd")) << " |\n";
  }
}

}  // namespace

std::string render_run_report(const ExperimentConfig& config, const RunResult& r) {
  std::ostringstream md;
  md << "# Run " << config.effective_run_id() << "\n\n";
  md << "- backend: " << config.backend.name() << "\n";
  md << "- profile: " << config.profile.name_string() << " (latency " << config.profile.toxic.latency_ms
     << " ms, jitter " << config.profile.toxic.jitter_ms << " ms, bandwidth "
     << (config.profile.toxic.bandwidth_bytes_per_s ? std::to_string(*config.profile.toxic.bandwidth_bytes_per_s) + " B/s"
                                                    : std::string("unlimited"))
     << ")\n";
  md << "- seed: " << config.seed << ", k: " << config.k << ", threshold: " << config.threshold << "\n";
  md << "- provider: " << config.provider.kind << " (" << config.provider.model << ")\n\n";

  md << "## Loading\n\n";
  md << "| turns sent | records created | skipped | wall time (s) |\n|---:|---:|---:|---:|\n";
  md << "| " << r.load.turns_sent << " | " << r.load.records_created << " | " << r.load.skipped << " | "
     << f("%.2f", r.load.wall_time_ms / 1000.0) << " |\n\n";

  const auto& a = r.accuracy;
  md << "## Accuracy\n\n";
  md << "| questions | correct | wrong | IDK | accuracy | IDK rate | answer rate | 95% CI |\n";
  md << "|---:|---:|---:|---:|---:|---:|---:|---|\n";
  if (a.n > 0) {
    auto ci = evaluation::wilson_ci(a.correct, a.n);
    md << "| " << a.n << " | " << a.correct << " | " << a.wrong << " | " << a.idk << " | " << pct(a.accuracy()) << " | "
       << pct(a.idk_rate()) << " | " << pct(a.answer_rate()) << " | [" << f("%.3f", ci.low) << ", "
       << f("%.3f", ci.high) << "] |\n\n";
  } else {
    md << "| 0 | 0 | 0 | 0 | | | | |\n\n";
  }

  md << "## Resources\n\n";
  md << "| phase | tier | CPU (min) | RAM (MB) | disk (MB) | network (MB) | duration (min) | tokens |\n";
  md << "|---|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& row : r.metrics.rows) {
    md << "| " << telemetry::to_string(row.phase) << " | " << telemetry::to_string(row.tier) << " | "
       << f("%.4f", row.cpu_minutes) << " | " << f("%.3f", row.ram_mb) << " | " << f("%.4f", row.disk_mb) << " | "
       << f("%.4f", row.network_mb) << " | " << f("%.3f", row.duration_minutes) << " | " << row.tokens << " |\n";
  }
  md << "\n";
  if (const auto* qa = r.metrics.find(telemetry::Phase::qa, telemetry::Tier::cloud); qa && qa->latency.count > 0) {
    md << "Q&A request latency: mean " << f("%.1f", qa->latency.mean_ms) << " ms, p50 " << f("%.1f", qa->latency.p50_ms)
       << " ms, p95 " << f("%.1f", qa->latency.p95_ms) << " ms, max " << f("%.1f", qa->latency.max_ms) << " ms.\n\n";
  }

  md << "## Tokens\n\n";
  md << "| phase | component | prompt | completion | total |\n|---|---|---:|---:|---:|\n";
  for (const auto& [key, usage] : r.proxy_tokens.by_phase_component) {
    md << "| " << key.first << " | " << key.second << " | " << usage.prompt_tokens << " | " << usage.completion_tokens
       << " | " << usage.total_tokens << " |\n";
  }
  md << "\nProxy total " << r.proxy_tokens.total.total_tokens << " tokens over " << r.proxy_tokens.requests
     << " requests; callers saw " << r.response_tokens.total_tokens << " tokens over " << r.responses
     << " responses.\n\n";

  md << "## Cost\n\n";
  cost_table(md, {{config.effective_run_id(), r.cost.to_json()}});
  md << "\n## Network links\n\n";
  md << "| link | bytes up | bytes down | connections | delay samples |\n|---|---:|---:|---:|---:|\n";
  for (const auto& [name, s] : {std::pair{"coordinator-memory", &r.memory_link}, std::pair{"coordinator-responder", &r.responder_link}}) {
    md << "| " << name << " | " << s->bytes_up << " | " << s->bytes_down << " | " << s->connections << " | "
       << s->added_delay_samples_ms.size() << " |\n";
  }
  return md.str();
}

std::string render_statistics_report(const nlohmann::json& s, const std::string& title) {
  std::ostringstream md;
  md << "# " << title << "\n\n";
  md << "## Accuracy per experiment and memory\n\n";
  md << "| experiment | memory | questions | correct | wrong | IDK | accuracy | IDK | answers |\n";
  md << "|---|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& row : s.at("accuracy")) {
    md << "| " << row.at("profile").get<std::string>() << " | " << row.at("system").get<std::string>() << " | "
       << row.at("n") << " | " << row.at("correct") << " | " << row.at("wrong") << " | " << row.at("idk") << " | ";
    if (row.contains("accuracy")) {
      md << pct(row.at("accuracy")) << " | " << pct(row.at("idk_rate")) << " | " << pct(row.at("answer_rate"));
    } else {
      md << " | | ";
    }
    md << " |\n";
  }
  md << "\n";

  const bool incomplete = s.contains("complete") && !s.at("complete").get<bool>();
  if (!s.contains("z_tests")) {
    md << "Fewer than two completed cells: statistics omitted.\n";
    if (incomplete) md << "\nMatrix incomplete: statistics cover completed cells only.\n";
    return md.str();
  }

  md << "## Accuracy rates and 95% Wilson CIs\n\n";
  md << "| memory | experiment | accuracy | 95% CI |\n|---|---|---:|---|\n";
  for (const auto& row : s.at("accuracy")) {
    md << "| " << row.at("system").get<std::string>() << " | " << row.at("profile").get<std::string>() << " | "
       << f("%.3f", row.at("accuracy")) << " | [" << f("%.3f", row.at("ci").at("low")) << ", "
       << f("%.3f", row.at("ci").at("high")) << "] |\n";
  }

  md << "\n## Two-proportion z-tests (alpha = " << f("%.2f", s.at("alpha")) << ")\n\n";
  md << "| comparison | z-stat | p-value | significant |\n|---|---:|---:|---|\n";
  for (const auto& t : s.at("z_tests")) {
    md << "| " << t.at("comparison").get<std::string>() << " | " << f("%.3f", t.at("z")) << " | "
       << f("%.4f", t.at("p")) << " | " << (t.at("significant").get<bool>() ? "yes" : "no") << " |\n";
  }

  if (!s.at("costs").empty()) {
    md << "\n## Cost\n\n";
    std::vector<std::pair<std::string, nlohmann::json>> rows;
    for (const auto& c : s.at("costs")) {
      rows.emplace_back(c.at("system").get<std::string>() + " " + c.at("profile").get<std::string>(), c.at("breakdown"));
    }
    cost_table(md, rows);
  }

  if (s.contains("pareto")) {
    md << "\n## Statistical Pareto verdict\n\n";
    for (const auto& p : s.at("pareto").at("by_profile")) {
      const auto& v = p.at("verdict");
      const auto& tco = p.at("tco");
      md << "- " << p.at("profile").get<std::string>() << ": "
         << (v.at("dominant").is_null() ? std::string("no dominant system (trade-off)")
                                        : v.at("dominant").get<std::string>() + " dominant")
         << "; " << tco.at("other").get<std::string>() << " costs "
         << opt_pct(tco.at("comparison").at("total_delta")) << " relative to " << tco.at("baseline").get<std::string>()
         << "; p = " << f("%.4f", v.at("p_value")) << "\n";
    }
    const auto& o = s.at("pareto").at("overall");
    const auto& why = o.at("rationale");
    md << "\nOverall: "
       << (o.at("dominant").is_null() ? std::string("no dominant system") : o.at("dominant").get<std::string>() + " dominant")
       << " (financial_dominance=" << (why.at("financial_dominance").get<bool>() ? "true" : "false")
       << ", statistical_equivalence=" << (why.at("statistical_equivalence").get<bool>() ? "true" : "false")
       << ", accuracy_superiority=" << (why.at("accuracy_superiority").get<bool>() ? "true" : "false") << ")\n";
  }
  if (incomplete) {
    md << "\nMatrix incomplete: statistics cover completed cells only.\n";
  }
  return md.str();
}

}  // namespace memharness::experiment
