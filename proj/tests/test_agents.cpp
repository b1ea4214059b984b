#include <doctest.h>

#include <fstream>
#include <sstream>

#include "memharness/agents.hpp"
#include "memharness/prompts.hpp"
#include "test_support.hpp"

using namespace memharness;
using namespace memharness::agents;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

dataset::Conversation mini_conversation() {
  return dataset::load_corpus_file(test_support::fixture("mini.json").string()).conversations[0].conversation;
}

// Keeps every request it sees and answers with the mock.
class CapturingProvider final : public llm::Provider {
 public:
  llm::ChatResponse chat(const llm::ChatRequest& req) override {
    std::lock_guard lk(mu);
    seen.push_back(req);
    return mock.chat(req);
  }
  std::mutex mu;
  std::vector<llm::ChatRequest> seen;
  llm::MockProvider mock;
};

class FailingProvider final : public llm::Provider {
 public:
  explicit FailingProvider(int failures) : failures_(failures) {}
  llm::ChatResponse chat(const llm::ChatRequest& req) override {
    if (calls_++ < failures_) throw ProviderHttpError(500, "down");
    return llm::MockProvider().chat(req);
  }

 private:
  int failures_;
  int calls_ = 0;
};

// A /remember endpoint that records dia_ids and starts failing after `ok_turns`.
struct RecordingMemoryStub {
  explicit RecordingMemoryStub(std::size_t ok_turns) : ok(ok_turns) {
    server.server().Post("/remember", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lk(mu);
      if (dia_ids.size() >= ok) {
        ++refused;
        http::reply_json(res, {{"error", "down"}}, 503);
        return;
      }
      dia_ids.push_back(nlohmann::json::parse(req.body).at("dia_id").get<std::string>());
      http::reply_json(res, {{"ids", {"mem-" + std::to_string(dia_ids.size())}}, {"skipped", false}});
    });
    server.start("127.0.0.1", 0);
  }
  std::size_t ok;
  std::mutex mu;
  std::vector<std::string> dia_ids;
  int refused = 0;
  http::BackgroundServer server;
};

struct Stack {
  std::shared_ptr<memory::VectorBackend> backend =
      std::make_shared<memory::VectorBackend>(std::make_shared<memory::HashingEmbedder>(),
                                              memory::deterministic_fact_extractor());
  std::shared_ptr<CapturingProvider> provider = std::make_shared<CapturingProvider>();
  memory::MemoryService memory{backend, {}};
  ResponderService responder{provider, PromptTemplates::defaults(), {}};
};

}  // namespace

TEST_CASE("prompt templates") {
  auto t = PromptTemplates::defaults();
  CHECK_NOTHROW(t.validate());
  CHECK(t.responder_system == prompts::kResponderSystem);
  CHECK(t.coordinator_system.find("You MUST use both tools in sequence.") != std::string::npos);
  auto broken = t;
  broken.responder_user = "MEMORIES: {memory}";
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = t;
  broken.responder_system = "Be nice.";
  CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("responder prompt matches the hand-built golden file") {
  const std::string memories =
      "[2023-01-29] Gina started an online clothing store\n"
      "[2023-01-20] Gina also lost Gina's job at Door Dash this month";
  auto req = responder_request(PromptTemplates::defaults(), memories, "What kind of store did Gina start?", "mock");
  CHECK(req.system_prompt == prompts::kResponderSystem);
  CHECK(req.user_prompt == read_file(test_support::fixture("golden/responder_user_q3.txt")));
  CHECK(req.temperature == 0.0);
}

TEST_CASE("responder_answer") {
  llm::MockProvider mock;
  CHECK(responder_answer("", "Oscar Melanie's pet?", mock) == prompts::kIdkAnswer);

  const std::string three = "[2023-01-01] one\n[2023-01-02] two\n[2023-01-03] three";
  auto req = responder_request(PromptTemplates::defaults(), three, "q?", "mock");
  auto m = req.user_prompt.find("MEMORIES:\n");
  auto q = req.user_prompt.find("\nQUESTION:");
  REQUIRE(m != std::string::npos);
  REQUIRE(q != std::string::npos);
  CHECK(req.user_prompt.substr(m + 10, q - m - 10) == three);

  FailingProvider failing(5);
  CHECK_THROWS_AS(responder_answer("x", "y", failing), ProviderHttpError);
}

TEST_CASE("loading sends turns in order") {
  RecordingMemoryStub stub(100);
  auto report = load_conversation(mini_conversation(), MemoryClient(stub.server.base_url()));
  CHECK(report.turns_sent == 6);
  CHECK(report.records_created == 6);
  CHECK_FALSE(report.error.has_value());
  CHECK(stub.dia_ids == std::vector<std::string>{"D1:1", "D1:2", "D1:3", "D2:1", "D2:2", "D2:3"});
}

TEST_CASE("outage after turn 2 stops the load with partial progress") {
  RecordingMemoryStub stub(2);
  auto report = load_conversation(mini_conversation(), MemoryClient(stub.server.base_url()));
  CHECK(report.turns_sent == 2);
  REQUIRE(report.error.has_value());
  CHECK(stub.refused == kMaxConsecutiveFailures);
  auto j = report.to_json();
  CHECK(j.at("turns_sent") == 2);
  CHECK(j.contains("error"));
}

TEST_CASE("coordinator asks in tool order and never leaks raw turns") {
  Stack s;
  auto conv = mini_conversation();
  Coordinator coord({s.memory.base_url(), s.responder.base_url()});
  auto report = coord.load(conv);
  CHECK(report.turns_sent == 6);

  auto r = coord.ask("What kind of store did Gina start?");
  CHECK(r.tool_trace == std::vector<std::string>{kSearchMemory, kAnswerQuestion});
  CHECK(r.answer == "an online clothing store");
  CHECK(r.retries == 0);
  CHECK(r.timings.search_memory_ms + r.timings.answer_question_ms <= r.timings.total_ms);
  CHECK(r.retrieved_memories.find("[2023-01-29] Gina started an online clothing store") != std::string::npos);

  auto idk = coord.ask("What is the capital of Atlantis?");
  CHECK(idk.answer == prompts::kIdkAnswer);
  CHECK(idk.tool_trace == std::vector<std::string>{kSearchMemory, kAnswerQuestion});

  std::lock_guard lk(s.provider->mu);
  REQUIRE(s.provider->seen.size() == 2);
  const auto& prompt = s.provider->seen[0].user_prompt;
  CHECK(prompt == prompts::render_responder_user(prompts::kResponderUser, r.retrieved_memories,
                                                 "What kind of store did Gina start?"));
  for (const auto& st : dataset::turns_in_order(conv)) {
    CHECK(prompt.find(st.turn->text) == std::string::npos);
  }

  auto round = AskResponse::from_json(r.to_json());
  CHECK(round.answer == r.answer);
  CHECK(round.tool_trace == r.tool_trace);
}

TEST_CASE("coordinator retries once, then names the failed stage") {
  auto backend = std::make_shared<memory::VectorBackend>(std::make_shared<memory::HashingEmbedder>(),
                                                         memory::deterministic_fact_extractor());
  memory::MemoryService mem(backend, {});

  ResponderService flaky(std::make_shared<FailingProvider>(1), PromptTemplates::defaults(), {});
  Coordinator ok({mem.base_url(), flaky.base_url()});
  auto r = ok.ask("anything?");
  CHECK(r.retries == 1);
  CHECK(r.answer == prompts::kIdkAnswer);

  ResponderService broken(std::make_shared<FailingProvider>(100), PromptTemplates::defaults(), {});
  Coordinator bad({mem.base_url(), broken.base_url()});
  try {
    bad.ask("anything?");
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == kAnswerQuestion);
  }

  mem.set_available(false);
  try {
    ok.ask("anything?");
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == kSearchMemory);
  }
}

TEST_CASE("a strategy that skips the search is refused") {
  struct AnswerFirst final : ToolStrategy {
    std::vector<std::string> plan(const std::string&) override { return {kAnswerQuestion}; }
  };
  Stack s;
  Coordinator coord({s.memory.base_url(), s.responder.base_url()}, std::make_shared<AnswerFirst>());
  CHECK_THROWS_AS(coord.ask("q?"), StageError);
  std::lock_guard lk(s.provider->mu);
  CHECK(s.provider->seen.empty());
}

TEST_CASE("coordinator service endpoints") {
  Stack s;
  telemetry::MeterRegistry registry;
  auto& meter = registry.meter("coordinator", telemetry::Tier::cloud);
  Coordinator coord({s.memory.base_url(), s.responder.base_url(), 20, 1, &meter});
  auto conv = mini_conversation();
  CoordinatorServiceOptions opts;
  opts.meter = &meter;
  opts.registry = &registry;
  CoordinatorService svc(coord, {{conv.id, conv}}, opts);
  httplib::Client c(svc.base_url());

  auto health = c.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto missing = c.Post("/load", R"({"conversation_id": "nope"})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto load = c.Post("/load", nlohmann::json{{"conversation_id", conv.id}}.dump(), "application/json");
  REQUIRE(load);
  CHECK(load->status == 200);
  CHECK(nlohmann::json::parse(load->body).at("turns_sent") == 6);

  auto ask = c.Post("/ask", R"({"question": "What kind of store did Gina start?"})", "application/json");
  REQUIRE(ask);
  CHECK(ask->status == 200);
  auto body = nlohmann::json::parse(ask->body);
  CHECK(body.at("answer") == "an online clothing store");
  CHECK(body.at("tool_trace") == nlohmann::json{kSearchMemory, kAnswerQuestion});

  s.responder.stop();
  auto failed = c.Post("/ask", R"({"question": "q?"})", "application/json");
  REQUIRE(failed);
  CHECK(failed->status == 502);
  CHECK(nlohmann::json::parse(failed->body).at("stage") == kAnswerQuestion);

  auto metrics = c.Get("/metrics");
  REQUIRE(metrics);
  CHECK(metrics->body.find("coordinator") != std::string::npos);
  CHECK(meter.net_bytes() > 0);
}
