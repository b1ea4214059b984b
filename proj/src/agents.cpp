#include "memharness/agents.hpp"

#include <chrono>

#include "memharness/prompts.hpp"
#include "memharness/text.hpp"

namespace memharness::agents {

namespace {

using SteadyClock = std::chrono::steady_clock;

double ms_since(SteadyClock::time_point start) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
}

httplib::Client client_for(const std::string& origin) {
  httplib::Client client(origin);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(120, 0);
  client.set_write_timeout(30, 0);
  return client;
}

nlohmann::json post(const std::string& base_url, const std::string& path, const nlohmann::json& body,
                    const std::string& what, telemetry::ComponentMeter* meter) {
  auto payload = body.dump();
  auto url = http::split_url(base_url);
  auto client = client_for(url.origin);
  auto res = client.Post(url.prefix + path, payload, "application/json");
  if (meter) meter->add_net_bytes(payload.size() + (res ? res->body.size() : 0));
  if (!res) throw BackendUnavailable(what + " unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw BackendUnavailable(what + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(what + " sent malformed JSON: " + e.what());
  }
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
  return {std::string(prompts::kCoordinatorSystem), std::string(prompts::kResponderSystem),
          std::string(prompts::kResponderUser)};
}

void PromptTemplates::validate() const {
  if (responder_system.find(prompts::kIdkAnswer) == std::string::npos ||
      responder_user.find(prompts::kIdkAnswer) == std::string::npos) {
    throw ConfigError("responder templates must contain the exact IDK sentence");
  }
  if (responder_user.find("{memory}") == std::string::npos || responder_user.find("{question}") == std::string::npos) {
    throw ConfigError("responder user template needs {memory} and {question}");
  }
}

llm::ChatRequest responder_request(const PromptTemplates& templates, const std::string& memory_block,
                                   const std::string& question, const std::string& model) {
  llm::ChatRequest req;
  req.system_prompt = templates.responder_system;
  req.user_prompt = prompts::render_responder_user(templates.responder_user, memory_block, question);
  req.model_name = model;
  req.temperature = 0.0;
  return req;
}

std::string responder_answer(const std::string& memory_block, const std::string& question, llm::Provider& provider,
                             const PromptTemplates& templates, const std::string& model) {
  return provider.chat(responder_request(templates, memory_block, question, model)).text;
}

ResponderService::ResponderService(std::shared_ptr<llm::Provider> provider, PromptTemplates templates,
                                   ResponderOptions options)
    : provider_(std::move(provider)), templates_(std::move(templates)), options_(std::move(options)) {
  templates_.validate();
  auto& s = server_.server();
  s.Post("/answer", [this](const httplib::Request& req, httplib::Response& res) {
    telemetry::CpuScope cpu(options_.meter);
    std::string memory_block, question;
    try {
      auto body = nlohmann::json::parse(req.body);
      memory_block = body.value("memory", std::string());
      question = body.at("question").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      http::reply_json(res, {{"error", std::string("bad answer request: ") + e.what()}}, 400);
      return;
    }
    try {
      http::reply_json(res, {{"answer", responder_answer(memory_block, question, *provider_, templates_, options_.model)}});
    } catch (const Error& e) {
      http::reply_json(res, {{"error", e.what()}}, 502);
    }
    if (options_.meter) options_.meter->add_net_bytes(req.body.size() + res.body.size());
  });
  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { http::reply_json(res, {{"status", "ok"}}); });
  server_.start(options_.host, options_.port);
}

ResponderService::~ResponderService() { server_.stop(); }

MemoryClient::Remembered MemoryClient::remember(const memory::RememberRequest& req) const {
  auto body = post(base_url_, "/remember", req.to_json(), "memory service", meter_);
  return {body.value("ids", std::vector<std::string>{}), body.value("skipped", false)};
}

std::vector<memory::SearchResult> MemoryClient::search(const std::string& query, std::size_t k) const {
  auto body = post(base_url_, "/search", {{"query", query}, {"k", k}}, "memory service", meter_);
  std::vector<memory::SearchResult> out;
  try {
    for (const auto& r : body.at("results")) {
      memory::SearchResult s;
      s.record.id = r.value("id", std::string());
      s.record.text = r.at("text").get<std::string>();
      s.record.date = dataset::parse_iso_date(r.at("date").get<std::string>());
      s.score = r.value("score", 0.0);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("malformed search response: ") + e.what());
  }
  return out;
}

bool MemoryClient::healthy() const {
  auto url = http::split_url(base_url_);
  auto client = client_for(url.origin);
  auto res = client.Get(url.prefix + "/health");
  return res && res->status == 200;
}

nlohmann::json LoadReport::to_json() const {
  nlohmann::json j = {{"turns_sent", turns_sent},
                      {"records_created", records_created},
                      {"skipped", skipped},
                      {"wall_time_ms", wall_time_ms}};
  if (error) j["error"] = *error;
  return j;
}

LoadReport load_conversation(const dataset::Conversation& conv, const MemoryClient& memory) {
  LoadReport report;
  auto start = SteadyClock::now();
  for (const auto& [session, turn] : dataset::turns_in_order(conv)) {
    memory::RememberRequest req{turn->speaker, turn->text, turn->dia_id, session->date()};
    int failures = 0;
    while (true) {
      try {
        auto result = memory.remember(req);
        ++report.turns_sent;
        report.records_created += result.ids.size();
        if (result.skipped) ++report.skipped;
        break;
      } catch (const BackendUnavailable& e) {
        if (++failures >= kMaxConsecutiveFailures) {
          report.error = "turn " + turn->dia_id + ": " + e.what();
          report.wall_time_ms = ms_since(start);
          return report;
        }
      }
    }
  }
  report.wall_time_ms = ms_since(start);
  return report;
}

nlohmann::json AskResponse::to_json() const {
  return {{"answer", answer},
          {"retrieved_memories", retrieved_memories},
          {"tool_trace", tool_trace},
          {"timings",
           {{"search_memory_ms", timings.search_memory_ms},
            {"answer_question_ms", timings.answer_question_ms},
            {"total_ms", timings.total_ms}}},
          {"retries", retries}};
}

AskResponse AskResponse::from_json(const nlohmann::json& j) {
  AskResponse r;
  r.answer = j.at("answer").get<std::string>();
  r.retrieved_memories = j.value("retrieved_memories", std::string());
  r.tool_trace = j.value("tool_trace", std::vector<std::string>{});
  if (j.contains("timings")) {
    const auto& t = j.at("timings");
    r.timings.search_memory_ms = t.value("search_memory_ms", 0.0);
    r.timings.answer_question_ms = t.value("answer_question_ms", 0.0);
    r.timings.total_ms = t.value("total_ms", 0.0);
  }
  r.retries = j.value("retries", 0);
  return r;
}

Coordinator::Coordinator(CoordinatorOptions options, std::shared_ptr<ToolStrategy> strategy)
    : options_(std::move(options)),
      strategy_(strategy ? std::move(strategy) : std::make_shared<FixedOrderStrategy>()),
      memory_(options_.memory_url, options_.meter) {
  if (options_.k == 0) throw ConfigError("k must be at least 1");
}

std::string Coordinator::call_responder(const std::string& memory_block, const std::string& question) const {
  auto body = post(options_.responder_url, "/answer", {{"memory", memory_block}, {"question", question}}, "responder",
                   options_.meter);
  try {
    return body.at("answer").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("responder sent no answer: ") + e.what());
  }
}

AskResponse Coordinator::ask(const std::string& question) {
  if (text::trim(question).empty()) throw StageError("ask", "empty question");
  telemetry::CpuScope cpu(options_.meter);
  AskResponse out;
  auto start = SteadyClock::now();

  auto with_retry = [&](const std::string& stage, auto&& fn) {
    for (int attempt = 0;; ++attempt) {
      try {
        return fn();
      } catch (const Error& e) {
        if (attempt >= options_.retries_per_stage) throw StageError(stage, e.what());
        ++out.retries;
        ++retries_;
      }
    }
  };

  bool searched = false;
  for (const auto& tool : strategy_->plan(question)) {
    auto stage_start = SteadyClock::now();
    if (tool == kSearchMemory) {
      auto results = with_retry(tool, [&] { return memory_.search(question, options_.k); });
      out.retrieved_memories = memory::format_memories(results);
      out.timings.search_memory_ms += ms_since(stage_start);
      searched = true;
    } else if (tool == kAnswerQuestion) {
      if (!searched) throw StageError(tool, "answer_question requested before search_memory");
      out.answer = with_retry(tool, [&] { return call_responder(out.retrieved_memories, question); });
      out.timings.answer_question_ms += ms_since(stage_start);
    } else {
      throw StageError(tool, "unknown tool");
    }
    out.tool_trace.push_back(tool);
  }
  out.timings.total_ms = ms_since(start);
  return out;
}

LoadReport Coordinator::load(const dataset::Conversation& conv) const {
  telemetry::CpuScope cpu(options_.meter);
  return load_conversation(conv, memory_);
}

CoordinatorService::CoordinatorService(Coordinator& coordinator,
                                       std::map<std::string, dataset::Conversation> conversations,
                                       CoordinatorServiceOptions options)
    : coordinator_(coordinator), conversations_(std::move(conversations)), options_(options) {
  auto& s = server_.server();
  s.Post("/ask", [this](const httplib::Request& req, httplib::Response& res) {
    telemetry::CpuScope cpu(options_.meter);
    std::string question;
    try {
      question = nlohmann::json::parse(req.body).at("question").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      http::reply_json(res, {{"error", std::string("bad ask request: ") + e.what()}, {"stage", "request"}}, 400);
      return;
    }
    try {
      http::reply_json(res, coordinator_.ask(question).to_json());
    } catch (const StageError& e) {
      http::reply_json(res, {{"error", e.what()}, {"stage", e.stage()}}, 502);
    }
    if (options_.meter) options_.meter->add_net_bytes(req.body.size() + res.body.size());
  });
  s.Post("/load", [this](const httplib::Request& req, httplib::Response& res) {
    telemetry::CpuScope cpu(options_.meter);
    std::string id;
    try {
      id = nlohmann::json::parse(req.body).at("conversation_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      http::reply_json(res, {{"error", std::string("bad load request: ") + e.what()}}, 400);
      return;
    }
    auto it = conversations_.find(id);
    if (it == conversations_.end()) {
      http::reply_json(res, {{"error", "unknown conversation '" + id + "'"}}, 404);
      return;
    }
    auto report = coordinator_.load(it->second);
    http::reply_json(res, report.to_json(), report.error ? 502 : 200);
  });
  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { http::reply_json(res, {{"status", "ok"}}); });
  s.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(options_.registry ? options_.registry->render_text() : std::string(), "text/plain");
  });
  server_.start(options_.host, options_.port);
}

CoordinatorService::~CoordinatorService() { server_.stop(); }

}  // namespace memharness::agents
