#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "memharness/dataset.hpp"
#include "memharness/embedding.hpp"
#include "memharness/extraction.hpp"
#include "memharness/http.hpp"
#include "memharness/llm.hpp"
#include "memharness/telemetry.hpp"

namespace memharness::memory {

using dataset::Date;

struct MemoryRecord {
  std::string id;
  std::string text;
  Date date;
  std::string speaker;
  std::string source_dia_id;
  std::optional<Vector> embedding;  // vector backend only
};

struct SearchResult {
  MemoryRecord record;
  double score = 0;  // in [0, 1]
};

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  Date date;
};

struct BackendKind {
  enum class Type { vector, graph, external };
  Type type = Type::vector;
  std::string url;  // external only

  static BackendKind parse(const std::string& name, const std::string& url = {});
  std::string name() const;
};

// One turn as sent to /remember.
struct RememberRequest {
  std::string speaker;
  std::string text;
  std::string dia_id;
  Date session_date;

  nlohmann::json to_json() const;
  static RememberRequest from_json(const nlohmann::json& j);
};

inline constexpr std::size_t kDefaultTopK = 20;

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  // Ids of the records created, in insertion order. Throws ExtractionError
  // or BackendUnavailable.
  virtual std::vector<std::string> remember(const RememberRequest& req) = 0;
  // At most k results sorted by non-increasing score; ties keep insertion order.
  virtual std::vector<SearchResult> search(const std::string& query, std::size_t k) const = 0;
  virtual std::size_t record_count() const = 0;
  // Rough heap footprint of the store, reported as the component's RAM.
  virtual std::uint64_t approx_bytes() const = 0;
  virtual void snapshot(const std::filesystem::path& path) const = 0;
};

using FactExtractor = std::function<std::vector<std::string>(const RememberRequest&)>;
using TripleExtractor = std::function<std::vector<TripleText>(const RememberRequest&)>;

FactExtractor deterministic_fact_extractor();
TripleExtractor deterministic_triple_extractor();
// Extractors that ask an LLM provider with the extraction prompts; provider
// failures become ExtractionError.
FactExtractor llm_fact_extractor(std::shared_ptr<llm::Provider> provider, std::string model);
TripleExtractor llm_triple_extractor(std::shared_ptr<llm::Provider> provider, std::string model);

// The mem0 role: extracted fact lines embedded and stored as records.
// Duplicate facts are kept.
class VectorBackend final : public Backend {
 public:
  VectorBackend(std::shared_ptr<const Embedder> embedder, FactExtractor extractor);

  std::string name() const override { return "vector"; }
  std::vector<std::string> remember(const RememberRequest& req) override;
  // Score is (1 + cosine) / 2.
  std::vector<SearchResult> search(const std::string& query, std::size_t k) const override;
  std::size_t record_count() const override;
  std::uint64_t approx_bytes() const override;
  void snapshot(const std::filesystem::path& path) const override;

 private:
  std::shared_ptr<const Embedder> embedder_;
  FactExtractor extractor_;
  mutable std::shared_mutex mu_;
  std::vector<MemoryRecord> records_;
};

// The Graphiti role: triples over entity nodes deduplicated by
// case-insensitive name.
//
// Search matches query words against entity names. With S the matched
// entities and N the entities one hop from S (not in S):
//   a triple touching S scores 0.5 + 0.5 * |ends in S| / min(|S|, 2)
//   a triple touching only N scores 0.5 * |ends in N| / 2
// Triples touching neither are not returned.
class GraphBackend final : public Backend {
 public:
  explicit GraphBackend(TripleExtractor extractor, int hops = 1);

  std::string name() const override { return "graph"; }
  std::vector<std::string> remember(const RememberRequest& req) override;
  std::vector<SearchResult> search(const std::string& query, std::size_t k) const override;
  std::size_t record_count() const override;
  std::uint64_t approx_bytes() const override;
  void snapshot(const std::filesystem::path& path) const override;

  // Direct insertion, bypassing extraction.
  std::string add_triple(const Triple& t, const std::string& speaker = {}, const std::string& dia_id = {});
  std::size_t entity_count() const;
  std::vector<Triple> triples() const;

 private:
  struct Edge {
    std::size_t subject;
    std::size_t object;
    MemoryRecord record;
    Triple triple;
  };

  std::size_t entity_id(const std::string& name);  // caller holds the write lock
  std::string add_triple_locked(const Triple& t, const std::string& speaker, const std::string& dia_id);

  TripleExtractor extractor_;
  int hops_;
  mutable std::shared_mutex mu_;
  std::vector<std::string> entity_names_;
  std::map<std::string, std::size_t> entity_index_;  // lowercase name -> id
  std::vector<Edge> edges_;
};

// Forwards /remember and /search verbatim to another memory service.
class ExternalBackend final : public Backend {
 public:
  explicit ExternalBackend(std::string base_url);

  std::string name() const override { return "external"; }
  std::vector<std::string> remember(const RememberRequest& req) override;
  std::vector<SearchResult> search(const std::string& query, std::size_t k) const override;
  std::size_t record_count() const override { return remembered_; }
  std::uint64_t approx_bytes() const override { return 0; }
  void snapshot(const std::filesystem::path&) const override {}

 private:
  std::string base_url_;
  std::size_t remembered_ = 0;
};

// "[YYYY-MM-DD] <text>" per result, newline-separated, in result order.
std::string format_memories(const std::vector<SearchResult>& results);

nlohmann::json search_results_to_json(const std::vector<SearchResult>& results);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::optional<std::filesystem::path> journal;  // append-only JSONL of remembered records
  telemetry::ComponentMeter* meter = nullptr;
};

// HTTP front of a backend:
//   POST /remember {speaker, text, dia_id, session_date} -> {ids, skipped}
//   POST /search {query, k} -> {results: [{text, date, score}]}
//   GET /health
// A failed extraction is retried once; a second failure answers with
// skipped = true instead of an error.
class MemoryService {
 public:
  MemoryService(std::shared_ptr<Backend> backend, ServiceOptions options);
  ~MemoryService();

  std::string base_url() const { return server_.base_url(); }
  Backend& backend() { return *backend_; }
  // Makes /remember, /search and /health answer 503, for outage tests.
  void set_available(bool available) { available_ = available; }
  std::uint64_t skipped() const { return skipped_; }
  void stop() { server_.stop(); }

 private:
  void handle_remember(const httplib::Request& req, httplib::Response& res);
  void handle_search(const httplib::Request& req, httplib::Response& res);
  void update_ram();

  std::shared_ptr<Backend> backend_;
  ServiceOptions options_;
  std::atomic<bool> available_{true};
  std::atomic<std::uint64_t> skipped_{0};
  std::mutex journal_mu_;
  http::BackgroundServer server_;
};

}  // namespace memharness::memory
