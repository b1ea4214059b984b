#include "memharness/llm.hpp"

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "memharness/extraction.hpp"
#include "memharness/prompts.hpp"
#include "memharness/text.hpp"

namespace memharness {

namespace prompts {

std::string render_extraction_user(std::string_view speaker, std::string_view utterance) {
  return "speaker: " + std::string(speaker) + "\nutterance: " + std::string(utterance);
}

ExtractionInput parse_extraction_user(std::string_view user_prompt) {
  constexpr std::string_view kSpeaker = "speaker: ";
  constexpr std::string_view kUtterance = "\nutterance: ";
  if (user_prompt.substr(0, kSpeaker.size()) != kSpeaker) return {};
  auto sep = user_prompt.find(kUtterance);
  if (sep == std::string_view::npos) return {};
  return {std::string(user_prompt.substr(kSpeaker.size(), sep - kSpeaker.size())),
          std::string(user_prompt.substr(sep + kUtterance.size()))};
}

std::string render_responder_user(std::string_view tmpl, std::string_view memory, std::string_view question) {
  constexpr std::string_view kMemory = "{memory}";
  constexpr std::string_view kQuestion = "{question}";
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.substr(i, kMemory.size()) == kMemory) {
      out += memory;
      i += kMemory.size();
    } else if (tmpl.substr(i, kQuestion.size()) == kQuestion) {
      out += question;
      i += kQuestion.size();
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

}  // namespace prompts

namespace llm {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

struct ResponderPrompt {
  std::string memory;
  std::string question;
};

std::optional<ResponderPrompt> parse_responder_user(std::string_view user) {
  constexpr std::string_view kMem = "MEMORIES:\n";
  constexpr std::string_view kQ = "\nQUESTION:\n";
  constexpr std::string_view kTail = "\nAnswer using ONLY";
  if (user.substr(0, kMem.size()) != kMem) return std::nullopt;
  auto q = user.find(kQ, kMem.size() - 1);
  if (q == std::string_view::npos) return std::nullopt;
  ResponderPrompt p;
  p.memory = q >= kMem.size() ? std::string(user.substr(kMem.size(), q - kMem.size())) : std::string();
  auto qstart = q + kQ.size();
  auto tail = user.find(kTail, qstart);
  p.question = std::string(user.substr(qstart, tail == std::string_view::npos ? std::string_view::npos : tail - qstart));
  return p;
}

}  // namespace

nlohmann::json TokenUsage::to_json() const {
  return {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}, {"total_tokens", total_tokens}};
}

std::uint64_t estimate_tokens(std::string_view s) {
  std::uint64_t count = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto c = static_cast<unsigned char>(s[i]);
    if (is_word_byte(c)) {
      if (!in_word) ++count;
      in_word = true;
    } else if (c == '\'' && in_word && i + 1 < s.size() && is_word_byte(static_cast<unsigned char>(s[i + 1]))) {
      // apostrophe inside a word
    } else if (std::isspace(c)) {
      in_word = false;
    } else {
      ++count;
      in_word = false;
    }
  }
  return count;
}

std::string object_phrase(std::string_view memory_line) {
  std::string line = text::trim(memory_line);
  if (!line.empty() && line.front() == '[') {
    auto close = line.find("] ");
    if (close != std::string::npos) line = line.substr(close + 2);
  }
  std::vector<std::string> toks;
  std::istringstream in(line);
  for (std::string t; in >> t;) toks.push_back(t);
  if (toks.size() < 3) return line;
  std::size_t drop = 1;
  if (text::is_capitalized(toks[0]) && !text::is_capitalized(toks[1])) drop = 2;
  std::string out;
  for (std::size_t i = drop; i < toks.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

std::string mock_answer(std::string_view memory_block, std::string_view question) {
  std::map<std::string, int> weights;
  for (const auto& w : text::words(question)) {
    auto lw = text::to_lower(w);
    if (text::is_stopword(lw)) continue;
    int weight = text::is_capitalized(w) ? 2 : 1;
    auto& slot = weights[text::stem(lw)];
    slot = std::max(slot, weight);
  }

  int best = 0;
  std::string best_line;
  std::istringstream in{std::string(memory_block)};
  for (std::string line; std::getline(in, line);) {
    if (text::trim(line).empty()) continue;
    std::set<std::string> present;
    for (const auto& w : text::words(line)) present.insert(text::stem(w));
    int score = 0;
    for (const auto& [word, weight] : weights) {
      if (present.count(word)) score += weight;
    }
    if (score > best) {
      best = score;
      best_line = line;
    }
  }
  if (best < 2) return std::string(prompts::kIdkAnswer);
  return object_phrase(best_line);
}

ChatResponse MockProvider::chat(const ChatRequest& req) {
  auto start = std::chrono::steady_clock::now();
  ChatResponse resp;
  if (req.system_prompt == prompts::kFactExtractionSystem) {
    auto in = prompts::parse_extraction_user(req.user_prompt);
    for (const auto& fact : memory::extract_facts(in.speaker, in.utterance)) resp.text += fact + "\n";
  } else if (req.system_prompt == prompts::kTripleExtractionSystem) {
    auto in = prompts::parse_extraction_user(req.user_prompt);
    resp.text = memory::format_triple_lines(memory::extract_triples(in.speaker, in.utterance));
  } else if (auto p = parse_responder_user(req.user_prompt)) {
    resp.text = mock_answer(p->memory, p->question);
  } else {
    resp.text = std::string(prompts::kIdkAnswer);
  }
  resp.usage = TokenUsage::of(estimate_tokens(req.system_prompt) + estimate_tokens(req.user_prompt),
                              estimate_tokens(resp.text));
  resp.latency_ms = elapsed_ms(start);
  return resp;
}

nlohmann::json to_openai_request(const ChatRequest& req, std::uint64_t seed) {
  return {{"model", req.model_name},
          {"temperature", req.temperature},
          {"seed", seed},
          {"stream", false},
          {"messages",
           {{{"role", "system"}, {"content", req.system_prompt}}, {{"role", "user"}, {"content", req.user_prompt}}}}};
}

ChatRequest from_openai_request(const nlohmann::json& body) {
  ChatRequest req;
  req.model_name = body.value("model", std::string("mock"));
  req.temperature = body.value("temperature", 0.0);
  for (const auto& m : body.at("messages")) {
    auto role = m.at("role").get<std::string>();
    auto content = m.at("content").get<std::string>();
    if (role == "system") req.system_prompt += content;
    else if (role == "user") req.user_prompt += content;
  }
  return req;
}

nlohmann::json to_openai_response(const ChatResponse& resp, const std::string& model) {
  return {{"id", "chatcmpl-memharness"},
          {"object", "chat.completion"},
          {"model", model},
          {"choices",
           {{{"index", 0},
             {"message", {{"role", "assistant"}, {"content", resp.text}}},
             {"finish_reason", "stop"}}}},
          {"usage", resp.usage.to_json()}};
}

TokenUsage parse_usage(const nlohmann::json& body) {
  const auto& u = body.at("usage");
  TokenUsage usage;
  usage.prompt_tokens = u.at("prompt_tokens").get<std::uint64_t>();
  usage.completion_tokens = u.at("completion_tokens").get<std::uint64_t>();
  usage.total_tokens = u.contains("total_tokens") ? u.at("total_tokens").get<std::uint64_t>()
                                                  : usage.prompt_tokens + usage.completion_tokens;
  return usage;
}

OpenAiCompatibleProvider::OpenAiCompatibleProvider(HttpProviderOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("provider URL is empty");
}

ChatResponse OpenAiCompatibleProvider::chat(const ChatRequest& req) {
  auto url = http::split_url(options_.base_url);
  httplib::Client client(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  if (!options_.component.empty()) headers.emplace(kComponentHeader, options_.component);

  auto start = std::chrono::steady_clock::now();
  auto res = client.Post(url.prefix + kChatPath, headers, to_openai_request(req, options_.seed).dump(),
                         "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw ProviderTimeout("provider timed out: " + httplib::to_string(err));
    }
    throw ProviderHttpError(0, "provider request failed: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw ProviderHttpError(res->status, "provider returned HTTP " + std::to_string(res->status));
  }
  ChatResponse out;
  try {
    auto body = nlohmann::json::parse(res->body);
    out.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
    out.usage = parse_usage(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderHttpError(res->status, std::string("malformed provider response: ") + e.what());
  }
  out.latency_ms = elapsed_ms(start);
  return out;
}

ProviderServer::ProviderServer(std::shared_ptr<Provider> provider, const std::string& host, int port,
                               telemetry::ComponentMeter* meter)
    : provider_(std::move(provider)), meter_(meter) {
  server_.server().Post(kChatPath, [this](const httplib::Request& req, httplib::Response& res) {
    telemetry::CpuScope cpu(meter_);
    try {
      auto body = nlohmann::json::parse(req.body);
      auto chat = from_openai_request(body);
      auto resp = provider_->chat(chat);
      http::reply_json(res, to_openai_response(resp, chat.model_name));
    } catch (const nlohmann::json::exception& e) {
      http::reply_json(res, {{"error", {{"message", e.what()}}}}, 400);
    } catch (const std::exception& e) {
      http::reply_json(res, {{"error", {{"message", e.what()}}}}, 500);
    }
    if (meter_) meter_->add_net_bytes(req.body.size() + res.body.size());
  });
  server_.start(host, port);
}

}  // namespace llm
}  // namespace memharness
