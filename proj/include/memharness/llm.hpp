#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "memharness/error.hpp"
#include "memharness/http.hpp"
#include "memharness/telemetry.hpp"

namespace memharness::llm {

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  std::string model_name = "mock";
  double temperature = 0.0;
};

struct TokenUsage {
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  std::uint64_t total_tokens = 0;

  static TokenUsage of(std::uint64_t prompt, std::uint64_t completion) {
    return {prompt, completion, prompt + completion};
  }
  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    total_tokens += o.total_tokens;
    return *this;
  }
  bool operator==(const TokenUsage&) const = default;
  nlohmann::json to_json() const;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  double latency_ms = 0;
};

// Words (letter/digit runs, apostrophes inside words allowed) plus every
// standalone punctuation mark. "Hey Jon!" -> 3.
std::uint64_t estimate_tokens(std::string_view text);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse chat(const ChatRequest& req) = 0;
};

// Deterministic provider. Recognises the memory agent's extraction prompts
// and the responder prompt; anything else gets the IDK sentence.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::uint64_t seed = 0) : seed_(seed) {}
  ChatResponse chat(const ChatRequest& req) override;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Answering rule of the mock responder. Each memory line is scored by the
// question's content words it contains (a capitalized question word counts
// twice). A best score of at least 2 returns that line's object phrase,
// the earliest line winning ties; otherwise the IDK sentence.
std::string mock_answer(std::string_view memory_block, std::string_view question);

// Drops the leading "[date] " tag and the subject (and its verb) of a memory line.
std::string object_phrase(std::string_view memory_line);

// Passes calls through to another provider and sums the usage of every
// response it hands back.
class RecordingProvider final : public Provider {
 public:
  explicit RecordingProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}
  ChatResponse chat(const ChatRequest& req) override {
    auto resp = inner_->chat(req);
    std::lock_guard lk(mu_);
    usage_ += resp.usage;
    ++responses_;
    return resp;
  }
  TokenUsage usage() const {
    std::lock_guard lk(mu_);
    return usage_;
  }
  std::uint64_t responses() const {
    std::lock_guard lk(mu_);
    return responses_;
  }

 private:
  std::shared_ptr<Provider> inner_;
  mutable std::mutex mu_;
  TokenUsage usage_;
  std::uint64_t responses_ = 0;
};

// OpenAI-compatible chat completions over HTTP.
struct HttpProviderOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080 ; "/v1/chat/completions" is appended
  std::string api_key;
  std::string component;  // sent as X-Memharness-Component for the counting proxy
  std::chrono::milliseconds timeout{30'000};
  std::uint64_t seed = 0;
};

class OpenAiCompatibleProvider final : public Provider {
 public:
  explicit OpenAiCompatibleProvider(HttpProviderOptions options);
  ChatResponse chat(const ChatRequest& req) override;

 private:
  HttpProviderOptions options_;
};

inline constexpr const char* kComponentHeader = "X-Memharness-Component";
inline constexpr const char* kChatPath = "/v1/chat/completions";

nlohmann::json to_openai_request(const ChatRequest& req, std::uint64_t seed);
ChatRequest from_openai_request(const nlohmann::json& body);
nlohmann::json to_openai_response(const ChatResponse& resp, const std::string& model);
// Throws nlohmann::json exceptions when the usage block is absent or malformed.
TokenUsage parse_usage(const nlohmann::json& response_body);

// Serves a Provider over the OpenAI-compatible wire format.
class ProviderServer {
 public:
  ProviderServer(std::shared_ptr<Provider> provider, const std::string& host, int port,
                 telemetry::ComponentMeter* meter = nullptr);
  std::string base_url() const { return server_.base_url(); }
  void stop() { server_.stop(); }

 private:
  std::shared_ptr<Provider> provider_;
  telemetry::ComponentMeter* meter_;
  http::BackgroundServer server_;
};

// Forwards chat requests to a target unchanged and tallies the usage
// fields of the responses per (phase, component).
class CountingProxy {
 public:
  CountingProxy(std::string target_base_url, const std::string& host, int port,
                telemetry::ComponentMeter* meter = nullptr);
  ~CountingProxy();

  std::string base_url() const { return server_.base_url(); }
  void set_phase(std::string phase);
  std::string phase() const;

  struct Totals {
    std::map<std::pair<std::string, std::string>, TokenUsage> by_phase_component;
    TokenUsage total;
    std::uint64_t requests = 0;
    std::uint64_t unparsed = 0;

    nlohmann::json to_json() const;
  };
  Totals totals() const;
  void stop() { server_.stop(); }

 private:
  void forward(const httplib::Request& req, httplib::Response& res);

  std::string target_base_url_;
  telemetry::ComponentMeter* meter_;
  mutable std::mutex mu_;
  std::string phase_ = "unassigned";
  Totals totals_;
  http::BackgroundServer server_;
};

}  // namespace memharness::llm
