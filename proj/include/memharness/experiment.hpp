#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memharness/agents.hpp"
#include "memharness/costing.hpp"
#include "memharness/evaluation.hpp"
#include "memharness/llm.hpp"
#include "memharness/memory.hpp"
#include "memharness/netproxy.hpp"
#include "memharness/telemetry.hpp"

namespace memharness::experiment {

namespace fs = std::filesystem;

inline constexpr const char* kApiKeyEnv = "MEMHARNESS_API_KEY";

struct ProviderSettings {
  std::string kind = "mock";  // mock | openai-compatible
  std::string url;            // openai-compatible only
  std::string model = "mock";
  std::chrono::milliseconds timeout{60'000};
};

struct ExperimentConfig {
  memory::BackendKind backend;
  netproxy::NetworkProfile profile = netproxy::NetworkProfile::unconstrained();
  fs::path corpus;
  std::size_t conversation_index = 0;
  std::size_t k = memory::kDefaultTopK;
  double threshold = evaluation::kDefaultThreshold;
  std::uint64_t seed = 7;
  ProviderSettings provider;
  std::optional<fs::path> pricing;  // default: resolve_pricing_path()
  fs::path out_dir = "out";
  std::string run_id;  // default: <backend>_<profile>_seed<seed>
  std::chrono::milliseconds sample_interval{1000};
  telemetry::RamReduction ram = telemetry::RamReduction::peak;
  std::optional<std::size_t> max_questions;

  std::string effective_run_id() const;
  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  // Relative paths in `j` resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const fs::path& base_dir = {});
};

struct RunManifest {
  nlohmann::json config;
  std::map<std::string, std::string> endpoints;
  std::string started_at;
  std::string finished_at;
  std::string status = "running";  // running | completed | failed
  std::optional<std::string> error;
  std::vector<std::string> artifacts;  // file names relative to the run directory
  std::map<std::string, std::string> versions;

  nlohmann::json to_json() const;
  void write(const fs::path& path) const;
};

struct RunResult {
  fs::path dir;
  RunManifest manifest;
  agents::LoadReport load;
  std::vector<telemetry::AnswerRecord> answers;
  evaluation::AccuracyStats accuracy;
  telemetry::MetricsTable metrics;
  costing::CostBreakdown cost;
  llm::CountingProxy::Totals proxy_tokens;
  llm::TokenUsage response_tokens;  // summed per response at the callers
  std::uint64_t responses = 0;
  double loading_ms = 0;
  double qa_ms = 0;
  netproxy::ProxyStats memory_link;
  netproxy::ProxyStats responder_link;
};

// Runs one factorial cell end to end and writes its artifacts under
// out_dir/run_id. Throws StageError; the manifest is still written with
// status "failed".
RunResult run_experiment(const ExperimentConfig& config);

// Finds config/pricing.json in the working directory or the source tree;
// nullopt when neither exists.
std::optional<fs::path> resolve_pricing_path();
costing::PricingModel load_pricing(const std::optional<fs::path>& path);

// One cell of the statistics kernel's input.
struct CellStats {
  std::string system;
  std::string profile;
  evaluation::AccuracyStats accuracy;
  std::optional<costing::CostBreakdown> cost;
};

// Counts file: {"alpha"?, "cells": [{system, profile, correct, wrong, idk,
// questions?, token_cost_usd?, resources?: [metrics rows]}]}.
struct CountsFile {
  double alpha = evaluation::kDefaultAlpha;
  std::vector<CellStats> cells;
};
CountsFile load_counts_file(const fs::path& path, const costing::PricingModel& pricing);
CountsFile parse_counts(const nlohmann::json& j, const costing::PricingModel& pricing);

// Accuracy rows always; CIs, z-tests, TCO and Pareto verdicts only with two
// or more cells.
nlohmann::json compute_statistics(const std::vector<CellStats>& cells, double alpha);

struct MatrixConfig {
  std::vector<ExperimentConfig> cells;
  fs::path out_dir = "out";
  std::string matrix_id = "matrix";
  double alpha = evaluation::kDefaultAlpha;

  // {"out", "id", "alpha", "defaults": {...}, "backends": [...], "profiles": [...]}
  // or an explicit "cells" list; each cell overrides the defaults.
  static MatrixConfig from_json(const nlohmann::json& j, const fs::path& base_dir = {});
};

struct CellOutcome {
  std::string run_id;
  std::optional<RunResult> result;
  std::optional<std::string> error;
};

struct MatrixResult {
  fs::path dir;
  std::vector<CellOutcome> cells;
  bool complete = false;
  nlohmann::json verdict;
};

MatrixResult run_matrix(const MatrixConfig& config);

// report.md renderers.
std::string render_run_report(const ExperimentConfig& config, const RunResult& result);
std::string render_statistics_report(const nlohmann::json& statistics, const std::string& title);

std::string system_display_name(const memory::BackendKind& kind);

}  // namespace memharness::experiment
