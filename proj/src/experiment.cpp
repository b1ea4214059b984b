#include "memharness/experiment.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "memharness/dataset.hpp"
#include "memharness/embedding.hpp"

namespace memharness::experiment {

namespace {

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::map<std::string, std::string> versions() {
  return {{"memharness", "0.1.0"},
          {"compiler", __VERSION__},
          {"cpp-httplib", CPPHTTPLIB_VERSION},
          {"nlohmann-json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

netproxy::Endpoint endpoint_of(const std::string& base_url) {
  auto origin = http::split_url(base_url).origin;
  auto scheme = origin.find("://");
  return netproxy::parse_endpoint(scheme == std::string::npos ? origin : origin.substr(scheme + 3));
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

std::string system_display_name(const memory::BackendKind& kind) { return kind.name(); }

std::string ExperimentConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return backend.name() + "_" + profile.name_string() + "_seed" + std::to_string(seed);
}

void ExperimentConfig::validate() const {
  if (corpus.empty()) throw ConfigError("no corpus given");
  if (!fs::exists(corpus)) throw ConfigError("corpus " + corpus.string() + " does not exist");
  if (pricing && !fs::exists(*pricing)) throw ConfigError("pricing file " + pricing->string() + " does not exist");
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (provider.kind != "mock" && provider.kind != "openai-compatible") {
    throw ConfigError("unknown provider '" + provider.kind + "'");
  }
  if (provider.kind == "openai-compatible" && provider.url.empty()) {
    throw ConfigError("openai-compatible provider needs --provider-url");
  }
  if (sample_interval.count() <= 0) throw ConfigError("sample interval must be positive");
  profile.toxic.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"backend", backend.name()},
                      {"profile", profile.name_string()},
                      {"toxic",
                       {{"latency_ms", profile.toxic.latency_ms},
                        {"jitter_ms", profile.toxic.jitter_ms},
                        {"bandwidth_bytes_per_s", profile.toxic.bandwidth_bytes_per_s
                                                      ? nlohmann::json(*profile.toxic.bandwidth_bytes_per_s)
                                                      : nlohmann::json(nullptr)},
                        {"direction", netproxy::to_string(profile.toxic.direction)}}},
                      {"corpus", corpus.string()},
                      {"conversation_index", conversation_index},
                      {"k", k},
                      {"threshold", threshold},
                      {"seed", seed},
                      {"provider",
                       {{"kind", provider.kind},
                        {"url", provider.url},
                        {"model", provider.model},
                        {"timeout_ms", provider.timeout.count()}}},
                      {"out", out_dir.string()},
                      {"run_id", effective_run_id()},
                      {"sample_interval_ms", sample_interval.count()},
                      {"ram_reduction", ram == telemetry::RamReduction::peak ? "peak" : "mean"}};
  if (backend.type == memory::BackendKind::Type::external) j["backend_url"] = backend.url;
  if (pricing) j["pricing"] = pricing->string();
  if (max_questions) j["max_questions"] = *max_questions;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    c.backend = memory::BackendKind::parse(j.value("backend", std::string("vector")), j.value("backend_url", std::string()));
    c.profile = netproxy::NetworkProfile::from_name(j.value("profile", std::string("unconstrained")));
    c.corpus = resolve(j.value("corpus", std::string()), base_dir);
    c.conversation_index = j.value("conversation_index", std::size_t{0});
    c.k = j.value("k", memory::kDefaultTopK);
    c.threshold = j.value("threshold", evaluation::kDefaultThreshold);
    c.seed = j.value("seed", std::uint64_t{7});
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      c.provider.kind = p.value("kind", c.provider.kind);
      c.provider.url = p.value("url", c.provider.url);
      c.provider.model = p.value("model", c.provider.model);
      c.provider.timeout = std::chrono::milliseconds(p.value("timeout_ms", std::int64_t{60'000}));
    }
    if (j.contains("pricing")) c.pricing = resolve(j.at("pricing").get<std::string>(), base_dir);
    c.out_dir = resolve(j.value("out", std::string("out")), base_dir);
    c.run_id = j.value("run_id", std::string());
    c.sample_interval = std::chrono::milliseconds(j.value("sample_interval_ms", std::int64_t{1000}));
    c.ram = telemetry::parse_ram_reduction(j.value("ram_reduction", std::string("peak")));
    if (j.contains("max_questions")) c.max_questions = j.at("max_questions").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j = {{"config", config},         {"endpoints", endpoints}, {"started_at", started_at},
                      {"finished_at", finished_at}, {"status", status},       {"artifacts", artifacts},
                      {"versions", versions}};
  if (error) j["error"] = *error;
  return j;
}

void RunManifest::write(const fs::path& path) const { write_json(path, to_json()); }

std::optional<fs::path> resolve_pricing_path() {
  for (const fs::path& candidate : {fs::path("config/pricing.json"), fs::path(MEMHARNESS_SOURCE_DIR) / "config/pricing.json"}) {
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

costing::PricingModel load_pricing(const std::optional<fs::path>& path) {
  auto p = path ? path : resolve_pricing_path();
  return p ? costing::PricingModel::load(*p) : costing::PricingModel{};
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult result;
  result.dir = cfg.out_dir / cfg.effective_run_id();
  fs::create_directories(result.dir);
  auto& manifest = result.manifest;
  const auto manifest_path = result.dir / "manifest.json";
  manifest.config = cfg.to_json();
  manifest.started_at = iso_now();
  manifest.versions = versions();
  manifest.artifacts = {"manifest.json"};
  manifest.write(manifest_path);

  std::string stage = "setup";
  try {
    stage = "corpus";
    auto corpus = dataset::load_corpus_file(cfg.corpus.string());
    if (cfg.conversation_index >= corpus.conversations.size()) {
      throw ConfigError("conversation index " + std::to_string(cfg.conversation_index) + " out of range (" +
                        std::to_string(corpus.conversations.size()) + " conversations)");
    }
    const auto& entry = corpus.conversations[cfg.conversation_index];
    auto pricing = load_pricing(cfg.pricing);

    stage = "setup";
    telemetry::MeterRegistry registry;
    auto& coordinator_meter = registry.meter("coordinator", telemetry::Tier::cloud);
    auto& provider_meter = registry.meter("llm-provider", telemetry::Tier::cloud);
    auto& responder_meter = registry.meter("responder", telemetry::Tier::edge);
    auto& memory_meter = registry.meter("memory", telemetry::Tier::edge);
    auto& openai_proxy_meter = registry.meter("openai-proxy", telemetry::Tier::edge);

    std::unique_ptr<llm::ProviderServer> provider_server;
    std::string upstream = cfg.provider.url;
    if (cfg.provider.kind == "mock") {
      provider_server = std::make_unique<llm::ProviderServer>(std::make_shared<llm::MockProvider>(cfg.seed), "127.0.0.1",
                                                              0, &provider_meter);
      upstream = provider_server->base_url();
    }
    llm::CountingProxy counting(upstream, "127.0.0.1", 0, &openai_proxy_meter);

    const char* key = std::getenv(kApiKeyEnv);
    auto client = [&](const std::string& component) {
      llm::HttpProviderOptions o;
      o.base_url = counting.base_url();
      o.api_key = key ? key : "";
      o.component = component;
      o.timeout = cfg.provider.timeout;
      o.seed = cfg.seed;
      return std::make_shared<llm::RecordingProvider>(std::make_shared<llm::OpenAiCompatibleProvider>(o));
    };
    auto memory_llm = client("memory");
    auto responder_llm = client("responder");

    std::shared_ptr<memory::Backend> backend;
    switch (cfg.backend.type) {
      case memory::BackendKind::Type::vector:
        backend = std::make_shared<memory::VectorBackend>(std::make_shared<memory::HashingEmbedder>(),
                                                          memory::llm_fact_extractor(memory_llm, cfg.provider.model));
        break;
      case memory::BackendKind::Type::graph:
        backend = std::make_shared<memory::GraphBackend>(memory::llm_triple_extractor(memory_llm, cfg.provider.model));
        break;
      case memory::BackendKind::Type::external:
        backend = std::make_shared<memory::ExternalBackend>(cfg.backend.url);
        break;
    }
    memory::ServiceOptions memory_options;
    memory_options.journal = result.dir / "memory_journal.jsonl";
    memory_options.meter = &memory_meter;
    memory::MemoryService memory_service(backend, memory_options);
    manifest.artifacts.push_back("memory_journal.jsonl");

    agents::ResponderOptions responder_options;
    responder_options.model = cfg.provider.model;
    responder_options.meter = &responder_meter;
    agents::ResponderService responder(responder_llm, agents::PromptTemplates::defaults(), responder_options);

    netproxy::Proxy memory_link({"127.0.0.1", 0}, endpoint_of(memory_service.base_url()), cfg.profile, cfg.seed * 2 + 1);
    netproxy::Proxy responder_link({"127.0.0.1", 0}, endpoint_of(responder.base_url()), cfg.profile, cfg.seed * 2 + 2);

    agents::CoordinatorOptions coordinator_options;
    coordinator_options.memory_url = "http://" + memory_link.listen_endpoint().to_string();
    coordinator_options.responder_url = "http://" + responder_link.listen_endpoint().to_string();
    coordinator_options.k = cfg.k;
    coordinator_options.meter = &coordinator_meter;
    agents::Coordinator coordinator(coordinator_options);

    manifest.endpoints = {{"coordinator", "in-process"},
                          {"memory", memory_service.base_url()},
                          {"memory_via_proxy", coordinator_options.memory_url},
                          {"responder", responder.base_url()},
                          {"responder_via_proxy", coordinator_options.responder_url},
                          {"openai_proxy", counting.base_url()},
                          {"llm_provider", upstream}};
    manifest.write(manifest_path);

    telemetry::Sampler sampler(registry, cfg.sample_interval);
    sampler.start();
    std::vector<telemetry::PhaseWindow> windows;

    stage = "loading";
    counting.set_phase("loading");
    double start = registry.now_ms();
    sampler.sample_now();
    result.load = coordinator.load(entry.conversation);
    sampler.sample_now();
    double end = registry.now_ms();
    windows.push_back({telemetry::Phase::loading, start, end});
    result.loading_ms = end - start;
    if (result.load.error) throw StageError("loading", *result.load.error);

    stage = "qa";
    counting.set_phase("qa");
    std::vector<agents::AskResponse> responses;
    std::vector<double> latencies;
    std::size_t limit = std::min(entry.qa.size(), cfg.max_questions.value_or(entry.qa.size()));
    start = registry.now_ms();
    sampler.sample_now();
    for (std::size_t i = 0; i < limit; ++i) {
      responses.push_back(coordinator.ask(entry.qa[i].question));
      latencies.push_back(responses.back().timings.total_ms);
    }
    sampler.sample_now();
    end = registry.now_ms();
    windows.push_back({telemetry::Phase::qa, start, end});
    result.qa_ms = end - start;
    sampler.stop();

    stage = "scoring";
    memory::HashingEmbedder embedder;
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const auto& qa = entry.qa[i];
      auto scored = evaluation::classify(qa.expected_answer, responses[i].answer, cfg.threshold, embedder);
      telemetry::AnswerRecord r;
      r.index = i + 1;
      r.question = qa.question;
      r.expected = qa.expected_answer;
      r.received = responses[i].answer;
      r.string_sim = scored.similarity.string_sim;
      r.semantic_sim = scored.similarity.semantic_sim;
      r.final_sim = scored.similarity.final;
      r.classification = evaluation::to_string(scored.classification);
      r.category = qa.category;
      result.answers.push_back(std::move(r));
      result.accuracy.add(scored.classification);
    }

    stage = "telemetry";
    result.proxy_tokens = counting.totals();
    result.response_tokens = memory_llm->usage();
    result.response_tokens += responder_llm->usage();
    result.responses = memory_llm->responses() + responder_llm->responses();
    result.memory_link = memory_link.stats();
    result.responder_link = responder_link.stats();

    telemetry::AggregateOptions agg;
    agg.experiment = cfg.profile.name_string();
    agg.memory_backend = cfg.backend.name();
    agg.ram = cfg.ram;
    agg.latencies_ms[telemetry::Phase::qa] = latencies;
    costing::TierTokenUsage tier_usage;
    for (const auto& [key_pair, usage] : result.proxy_tokens.by_phase_component) {
      const auto& [phase, component] = key_pair;
      auto tier = registry.tier_of(component).value_or(telemetry::Tier::edge);
      tier_usage[tier].push_back({cfg.provider.model, usage});
      if (phase == "loading" || phase == "qa") agg.tokens[{telemetry::parse_phase(phase), tier}] += usage.total_tokens;
    }
    result.metrics = telemetry::aggregate(sampler.samples(), windows, registry.labels(), agg);
    auto paths = telemetry::emit_csv(result.metrics, result.answers, result.dir, cfg.backend.name(),
                                     cfg.profile.name_string());
    manifest.artifacts.push_back(paths.metrics.filename().string());
    manifest.artifacts.push_back(paths.answers.filename().string());

    if (cfg.backend.type != memory::BackendKind::Type::external) {
      backend->snapshot(result.dir / "memory_snapshot.json");
      manifest.artifacts.push_back("memory_snapshot.json");
    }

    stage = "costing";
    result.cost = costing::compute_cost(result.metrics, tier_usage, pricing);
    write_json(result.dir / "cost.json", {{"breakdown", result.cost.to_json()}, {"pricing", pricing.to_json()}});
    manifest.artifacts.push_back("cost.json");
    write_text(result.dir / "cost.svg",
               costing::render_cost_svg({{cfg.backend.name(), result.cost}}, cfg.effective_run_id() + " cost (USD)"));
    manifest.artifacts.push_back("cost.svg");

    stage = "report";
    nlohmann::json verdict = {{"run_id", cfg.effective_run_id()},
                              {"backend", cfg.backend.name()},
                              {"profile", cfg.profile.name_string()},
                              {"seed", cfg.seed},
                              {"k", cfg.k},
                              {"threshold", cfg.threshold},
                              {"accuracy", result.accuracy.to_json()},
                              {"token_usage", result.proxy_tokens.to_json()},
                              {"load",
                               {{"turns_sent", result.load.turns_sent},
                                {"records_created", result.load.records_created},
                                {"skipped", result.load.skipped}}}};
    if (result.accuracy.n > 0) {
      auto ci = evaluation::wilson_ci(result.accuracy.correct, result.accuracy.n);
      verdict["ci"] = {{"low", ci.low}, {"high", ci.high}, {"level", ci.level}};
    }
    write_json(result.dir / "verdict.json", verdict);
    manifest.artifacts.push_back("verdict.json");
    manifest.artifacts.push_back("report.md");
    write_text(result.dir / "report.md", render_run_report(cfg, result));

    manifest.status = "completed";
    manifest.finished_at = iso_now();
    manifest.write(manifest_path);
    return result;
  } catch (const std::exception& e) {
    manifest.status = "failed";
    auto* stage_error = dynamic_cast<const StageError*>(&e);
    manifest.error = stage_error ? std::string(e.what()) : stage + ": " + e.what();
    manifest.finished_at = iso_now();
    manifest.write(manifest_path);
    if (stage_error) throw;
    throw StageError(stage, e.what());
  }
}

CountsFile parse_counts(const nlohmann::json& j, const costing::PricingModel& pricing) {
  CountsFile out;
  try {
    out.alpha = j.value("alpha", evaluation::kDefaultAlpha);
    for (const auto& c : j.at("cells")) {
      CellStats cell;
      cell.system = c.at("system").get<std::string>();
      cell.profile = c.at("profile").get<std::string>();
      cell.accuracy = evaluation::AccuracyStats::from_counts(c.at("correct").get<std::uint64_t>(),
                                                            c.at("wrong").get<std::uint64_t>(),
                                                            c.at("idk").get<std::uint64_t>());
      if (c.contains("questions") && c.at("questions").get<std::uint64_t>() != cell.accuracy.n) {
        throw InvalidCounts(cell.system + "/" + cell.profile + ": correct + wrong + idk != questions");
      }
      if (c.contains("resources") || c.contains("token_cost_usd")) {
        telemetry::MetricsTable table;
        for (const auto& r : c.value("resources", nlohmann::json::array())) {
          telemetry::MetricsRow row;
          row.experiment = cell.profile;
          row.memory_backend = cell.system;
          row.phase = telemetry::parse_phase(r.at("phase").get<std::string>());
          row.tier = telemetry::parse_tier(r.at("tier").get<std::string>());
          row.cpu_minutes = r.value("cpu_minutes", 0.0);
          row.ram_mb = r.value("ram_mb", 0.0);
          row.disk_mb = r.value("disk_mb", 0.0);
          row.network_mb = r.value("network_mb", 0.0);
          row.duration_minutes = r.value("duration_minutes", 0.0);
          table.rows.push_back(row);
        }
        auto cost = costing::compute_cost(table, {}, pricing);
        // Recorded token spend is already in USD; it is billed at the edge,
        // where the LLM proxy sits.
        cost.cell(telemetry::Tier::edge, costing::Category::tokens) += c.value("token_cost_usd", 0.0);
        cell.cost = cost;
      }
      out.cells.push_back(std::move(cell));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidCounts(std::string("bad counts file: ") + e.what());
  }
  if (out.cells.empty()) throw InvalidCounts("counts file has no cells");
  return out;
}

CountsFile load_counts_file(const fs::path& path, const costing::PricingModel& pricing) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open counts file " + path.string());
  try {
    return parse_counts(nlohmann::json::parse(in), pricing);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidCounts("counts file " + path.string() + ": " + e.what());
  }
}

nlohmann::json compute_statistics(const std::vector<CellStats>& cells, double alpha) {
  nlohmann::json out = {{"alpha", alpha}};
  const bool full = cells.size() >= 2;
  auto rows = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json row = {{"system", c.system}, {"profile", c.profile}};
    row.update(c.accuracy.to_json());
    if (full) {
      auto ci = evaluation::wilson_ci(c.accuracy.correct, c.accuracy.n);
      row["ci"] = {{"low", ci.low}, {"high", ci.high}, {"level", ci.level}};
    }
    rows.push_back(std::move(row));
  }
  out["accuracy"] = rows;
  if (!full) return out;

  std::vector<std::string> profiles, systems;
  for (const auto& c : cells) {
    if (std::find(profiles.begin(), profiles.end(), c.profile) == profiles.end()) profiles.push_back(c.profile);
    if (std::find(systems.begin(), systems.end(), c.system) == systems.end()) systems.push_back(c.system);
  }

  auto tests = nlohmann::json::array();
  auto add_test = [&](const CellStats& a, const CellStats& b, const std::string& label) {
    auto t = evaluation::two_prop_z(a.accuracy.correct, a.accuracy.n, b.accuracy.correct, b.accuracy.n);
    tests.push_back({{"comparison", label},
                     {"a", {{"system", a.system}, {"profile", a.profile}}},
                     {"b", {{"system", b.system}, {"profile", b.profile}}},
                     {"z", t.z},
                     {"p", t.p},
                     {"significant", t.p < alpha},
                     {"degenerate", t.degenerate}});
  };
  for (const auto& profile : profiles) {
    std::vector<const CellStats*> in;
    for (const auto& c : cells) if (c.profile == profile) in.push_back(&c);
    for (std::size_t i = 0; i < in.size(); ++i)
      for (std::size_t j = i + 1; j < in.size(); ++j)
        add_test(*in[i], *in[j], in[i]->system + " vs " + in[j]->system + " (" + profile + ")");
  }
  for (const auto& system : systems) {
    std::vector<const CellStats*> in;
    for (const auto& c : cells) if (c.system == system) in.push_back(&c);
    for (std::size_t i = 0; i < in.size(); ++i)
      for (std::size_t j = i + 1; j < in.size(); ++j)
        add_test(*in[i], *in[j], system + ": " + in[i]->profile + " vs " + in[j]->profile);
  }
  out["z_tests"] = tests;

  auto costs = nlohmann::json::array();
  for (const auto& c : cells) {
    if (c.cost) costs.push_back({{"system", c.system}, {"profile", c.profile}, {"breakdown", c.cost->to_json()}});
  }
  out["costs"] = costs;

  auto by_profile = nlohmann::json::array();
  std::optional<std::string> common;
  bool agree = true, financial = true, equivalent = true, superior = true;
  for (const auto& profile : profiles) {
    std::vector<const CellStats*> in;
    for (const auto& c : cells) if (c.profile == profile) in.push_back(&c);
    if (in.size() != 2 || !in[0]->cost || !in[1]->cost) continue;
    evaluation::SystemSummary a{in[0]->system, in[0]->cost->total(), in[0]->accuracy.correct, in[0]->accuracy.n};
    evaluation::SystemSummary b{in[1]->system, in[1]->cost->total(), in[1]->accuracy.correct, in[1]->accuracy.n};
    auto verdict = evaluation::pareto_decision(a, b, alpha);
    const bool a_base = a.cost <= b.cost;
    const auto& base = a_base ? *in[0] : *in[1];
    const auto& other = a_base ? *in[1] : *in[0];
    auto tco = costing::tco_compare(*base.cost, *other.cost);
    by_profile.push_back({{"profile", profile},
                          {"a", a.name},
                          {"b", b.name},
                          {"verdict", verdict.to_json()},
                          {"tco", {{"baseline", base.system}, {"other", other.system}, {"comparison", tco.to_json()}}}});
    if (by_profile.size() == 1) common = verdict.dominant;
    else if (common != verdict.dominant) agree = false;
    financial = financial && verdict.financial_dominance;
    equivalent = equivalent && verdict.statistical_equivalence;
    superior = superior && verdict.accuracy_superiority;
  }
  if (!by_profile.empty()) {
    nlohmann::json overall = {{"dominant", agree && common ? nlohmann::json(*common) : nlohmann::json(nullptr)},
                              {"rationale",
                               {{"financial_dominance", financial},
                                {"statistical_equivalence", equivalent},
                                {"accuracy_superiority", superior}}},
                              {"profiles_considered", by_profile.size()}};
    out["pareto"] = {{"by_profile", by_profile}, {"overall", overall}};
  }
  return out;
}

MatrixConfig MatrixConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  MatrixConfig m;
  try {
    m.out_dir = resolve(j.value("out", std::string("out")), base_dir);
    m.matrix_id = j.value("id", std::string("matrix"));
    m.alpha = j.value("alpha", evaluation::kDefaultAlpha);
    auto defaults = j.value("defaults", nlohmann::json::object());
    std::vector<nlohmann::json> cells;
    if (j.contains("cells")) {
      for (const auto& c : j.at("cells")) cells.push_back(c);
    } else {
      for (const auto& b : j.value("backends", std::vector<std::string>{"vector", "graph"}))
        for (const auto& p : j.value("profiles", std::vector<std::string>{"unconstrained", "constrained"}))
          cells.push_back({{"backend", b}, {"profile", p}});
    }
    for (const auto& c : cells) {
      auto merged = defaults;
      merged.update(c);
      merged["out"] = (m.out_dir / m.matrix_id).string();
      m.cells.push_back(ExperimentConfig::from_json(merged, base_dir));
      m.cells.back().validate();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad matrix config: ") + e.what());
  }
  if (m.cells.empty()) throw ConfigError("matrix has no cells");
  return m;
}

MatrixResult run_matrix(const MatrixConfig& config) {
  MatrixResult out;
  out.dir = config.out_dir / config.matrix_id;
  fs::create_directories(out.dir);
  RunManifest manifest;
  manifest.started_at = iso_now();
  manifest.versions = versions();
  manifest.config = nlohmann::json::array();
  for (const auto& c : config.cells) manifest.config.push_back(c.to_json());
  manifest.artifacts = {"manifest.json"};
  manifest.write(out.dir / "manifest.json");

  std::vector<CellStats> stats;
  auto cells_json = nlohmann::json::array();
  out.complete = true;
  for (const auto& cell : config.cells) {
    CellOutcome outcome;
    outcome.run_id = cell.effective_run_id();
    try {
      auto r = run_experiment(cell);
      stats.push_back({system_display_name(cell.backend), cell.profile.name_string(), r.accuracy, r.cost});
      for (const auto& a : r.manifest.artifacts) manifest.artifacts.push_back(outcome.run_id + "/" + a);
      outcome.result = std::move(r);
    } catch (const Error& e) {
      outcome.error = e.what();
      out.complete = false;
      manifest.artifacts.push_back(outcome.run_id + "/manifest.json");
    }
    cells_json.push_back({{"run_id", outcome.run_id},
                          {"status", outcome.error ? "failed" : "completed"},
                          {"error", outcome.error ? nlohmann::json(*outcome.error) : nlohmann::json(nullptr)}});
    out.cells.push_back(std::move(outcome));
  }

  out.verdict = stats.empty() ? nlohmann::json{{"alpha", config.alpha}, {"accuracy", nlohmann::json::array()}}
                              : compute_statistics(stats, config.alpha);
  out.verdict["complete"] = out.complete;
  out.verdict["cells"] = cells_json;
  write_json(out.dir / "verdict.json", out.verdict);
  write_text(out.dir / "report.md", render_statistics_report(out.verdict, "Matrix " + config.matrix_id));
  std::vector<std::pair<std::string, costing::CostBreakdown>> chart;
  for (const auto& s : stats) {
    if (s.cost) chart.emplace_back(s.system + " " + s.profile, *s.cost);
  }
  write_text(out.dir / "cost.svg", costing::render_cost_svg(chart, "Cost per cell (USD, log scale)"));
  manifest.artifacts.insert(manifest.artifacts.end(), {"verdict.json", "report.md", "cost.svg"});
  manifest.status = out.complete ? "completed" : "failed";
  if (!out.complete) manifest.error = "one or more cells failed";
  manifest.finished_at = iso_now();
  manifest.write(out.dir / "manifest.json");
  return out;
}

}  // namespace memharness::experiment
