#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memharness/dataset.hpp"
#include "memharness/http.hpp"
#include "memharness/llm.hpp"
#include "memharness/memory.hpp"
#include "memharness/telemetry.hpp"

namespace memharness::agents {

struct PromptTemplates {
  std::string coordinator_system;
  std::string responder_system;
  std::string responder_user;  // has {memory} and {question}

  static PromptTemplates defaults();
  // Throws ConfigError unless both responder templates carry the IDK
  // sentence and responder_user has both slots.
  void validate() const;
};

inline constexpr const char* kSearchMemory = "search_memory";
inline constexpr const char* kAnswerQuestion = "answer_question";

llm::ChatRequest responder_request(const PromptTemplates& templates, const std::string& memory_block,
                                   const std::string& question, const std::string& model);

// Provider text, unchanged. Provider errors propagate.
std::string responder_answer(const std::string& memory_block, const std::string& question, llm::Provider& provider,
                             const PromptTemplates& templates = PromptTemplates::defaults(),
                             const std::string& model = "mock");

struct ResponderOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string model = "mock";
  telemetry::ComponentMeter* meter = nullptr;
};

// POST /answer {memory, question} -> {answer}; GET /health.
class ResponderService {
 public:
  ResponderService(std::shared_ptr<llm::Provider> provider, PromptTemplates templates, ResponderOptions options);
  ~ResponderService();

  std::string base_url() const { return server_.base_url(); }
  void stop() { server_.stop(); }

 private:
  std::shared_ptr<llm::Provider> provider_;
  PromptTemplates templates_;
  ResponderOptions options_;
  http::BackgroundServer server_;
};

// Client side of the memory service protocol.
class MemoryClient {
 public:
  // Request and response bodies are charged to `meter` when given.
  explicit MemoryClient(std::string base_url, telemetry::ComponentMeter* meter = nullptr)
      : base_url_(std::move(base_url)), meter_(meter) {}

  struct Remembered {
    std::vector<std::string> ids;
    bool skipped = false;
  };
  // Throws BackendUnavailable on transport errors and non-200 answers.
  Remembered remember(const memory::RememberRequest& req) const;
  std::vector<memory::SearchResult> search(const std::string& query, std::size_t k) const;
  bool healthy() const;

  const std::string& base_url() const { return base_url_; }

 private:
  std::string base_url_;
  telemetry::ComponentMeter* meter_;
};

struct LoadReport {
  std::size_t turns_sent = 0;
  std::size_t records_created = 0;
  std::size_t skipped = 0;
  double wall_time_ms = 0;
  std::optional<std::string> error;  // set when loading aborted

  nlohmann::json to_json() const;
};

inline constexpr int kMaxConsecutiveFailures = 3;

// Sends every turn to /remember, in order, one at a time. A turn that hits
// BackendUnavailable is resent; after three failures in a row the load
// stops and the report carries the error.
LoadReport load_conversation(const dataset::Conversation& conv, const MemoryClient& memory);

struct StageTimings {
  double search_memory_ms = 0;
  double answer_question_ms = 0;
  double total_ms = 0;
};

struct AskResponse {
  std::string answer;
  std::string retrieved_memories;
  std::vector<std::string> tool_trace;
  StageTimings timings;
  int retries = 0;

  nlohmann::json to_json() const;
  static AskResponse from_json(const nlohmann::json& j);
};

// Decides the tool sequence for a question. The shipped strategy is the
// fixed order the coordinator prompt demands; a model-driven one can be
// plugged in instead.
class ToolStrategy {
 public:
  virtual ~ToolStrategy() = default;
  virtual std::vector<std::string> plan(const std::string& question) = 0;
};

class FixedOrderStrategy final : public ToolStrategy {
 public:
  std::vector<std::string> plan(const std::string&) override { return {kSearchMemory, kAnswerQuestion}; }
};

struct CoordinatorOptions {
  std::string memory_url;
  std::string responder_url;
  std::size_t k = memory::kDefaultTopK;
  int retries_per_stage = 1;
  telemetry::ComponentMeter* meter = nullptr;
};

class Coordinator {
 public:
  explicit Coordinator(CoordinatorOptions options, std::shared_ptr<ToolStrategy> strategy = nullptr);

  // Throws StageError naming the failed stage; never answers without memories.
  AskResponse ask(const std::string& question);
  LoadReport load(const dataset::Conversation& conv) const;

  std::uint64_t retries() const { return retries_; }
  const CoordinatorOptions& options() const { return options_; }

 private:
  std::string call_responder(const std::string& memory_block, const std::string& question) const;

  CoordinatorOptions options_;
  std::shared_ptr<ToolStrategy> strategy_;
  MemoryClient memory_;
  std::atomic<std::uint64_t> retries_{0};
};

struct CoordinatorServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  telemetry::ComponentMeter* meter = nullptr;
  const telemetry::MeterRegistry* registry = nullptr;  // for GET /metrics
};

// POST /ask {question} -> AskResponse, or 502 {error, stage}
// POST /load {conversation_id} -> LoadReport
// GET /health, GET /metrics
class CoordinatorService {
 public:
  CoordinatorService(Coordinator& coordinator, std::map<std::string, dataset::Conversation> conversations,
                     CoordinatorServiceOptions options);
  ~CoordinatorService();

  std::string base_url() const { return server_.base_url(); }
  void stop() { server_.stop(); }

 private:
  Coordinator& coordinator_;
  std::map<std::string, dataset::Conversation> conversations_;
  CoordinatorServiceOptions options_;
  http::BackgroundServer server_;
};

}  // namespace memharness::agents
