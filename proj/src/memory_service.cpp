#include <fstream>

#include "memharness/memory.hpp"

namespace memharness::memory {

namespace {

httplib::Client make_client(const std::string& origin) {
  httplib::Client client(origin);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(60, 0);
  return client;
}

nlohmann::json post_json(const std::string& base_url, const std::string& path, const nlohmann::json& body) {
  auto url = http::split_url(base_url);
  auto client = make_client(url.origin);
  auto res = client.Post(url.prefix + path, body.dump(), "application/json");
  if (!res) throw BackendUnavailable("memory backend at " + base_url + " unreachable: " + httplib::to_string(res.error()));
  if (res->status == 422) throw ExtractionError("memory backend rejected the turn: " + res->body);
  if (res->status != 200) {
    throw BackendUnavailable("memory backend at " + base_url + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("malformed memory backend response: ") + e.what());
  }
}

}  // namespace

ExternalBackend::ExternalBackend(std::string base_url) : base_url_(std::move(base_url)) {
  BackendKind::parse("external", base_url_);  // validates
}

std::vector<std::string> ExternalBackend::remember(const RememberRequest& req) {
  auto body = post_json(base_url_, "/remember", req.to_json());
  auto ids = body.value("ids", std::vector<std::string>{});
  remembered_ += ids.size();
  return ids;
}

std::vector<SearchResult> ExternalBackend::search(const std::string& query, std::size_t k) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  auto body = post_json(base_url_, "/search", {{"query", query}, {"k", k}});
  std::vector<SearchResult> out;
  try {
    for (const auto& r : body.at("results")) {
      SearchResult s;
      s.record.id = r.value("id", std::string());
      s.record.text = r.at("text").get<std::string>();
      s.record.date = dataset::parse_iso_date(r.at("date").get<std::string>());
      s.score = std::clamp(r.value("score", 0.0), 0.0, 1.0);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("malformed search response: ") + e.what());
  } catch (const DateParseError& e) {
    throw BackendUnavailable(std::string("bad date in search response: ") + e.what());
  }
  if (out.size() > k) out.resize(k);
  return out;
}

MemoryService::MemoryService(std::shared_ptr<Backend> backend, ServiceOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  auto& s = server_.server();
  s.Post("/remember", [this](const httplib::Request& req, httplib::Response& res) { handle_remember(req, res); });
  s.Post("/search", [this](const httplib::Request& req, httplib::Response& res) { handle_search(req, res); });
  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    if (!available_) return http::reply_json(res, {{"status", "unavailable"}}, 503);
    http::reply_json(res, {{"status", "ok"}, {"backend", backend_->name()}, {"records", backend_->record_count()}});
  });
  if (options_.journal) std::ofstream(*options_.journal, std::ios::trunc);
  update_ram();
  server_.start(options_.host, options_.port);
}

MemoryService::~MemoryService() { server_.stop(); }

void MemoryService::update_ram() {
  if (options_.meter) options_.meter->set_ram_bytes(backend_->approx_bytes());
}

void MemoryService::handle_remember(const httplib::Request& req, httplib::Response& res) {
  telemetry::CpuScope cpu(options_.meter);
  if (options_.meter) options_.meter->add_net_bytes(req.body.size());
  if (!available_) {
    http::reply_json(res, {{"error", "memory backend unavailable"}}, 503);
    return;
  }
  RememberRequest request;
  try {
    request = RememberRequest::from_json(nlohmann::json::parse(req.body));
  } catch (const std::exception& e) {
    http::reply_json(res, {{"error", std::string("bad remember request: ") + e.what()}}, 400);
    return;
  }

  std::vector<std::string> ids;
  bool skipped = false;
  try {
    for (int attempt = 0;; ++attempt) {
      try {
        ids = backend_->remember(request);
        break;
      } catch (const ExtractionError&) {
        if (attempt == 1) {
          skipped = true;
          ++skipped_;
          break;
        }
      }
    }
  } catch (const BackendUnavailable& e) {
    http::reply_json(res, {{"error", e.what()}}, 503);
    return;
  }

  if (options_.journal && !ids.empty()) {
    auto line = nlohmann::json{{"dia_id", request.dia_id},
                               {"speaker", request.speaker},
                               {"session_date", dataset::format_date(request.session_date)},
                               {"ids", ids}}
                    .dump() +
                "\n";
    std::lock_guard lk(journal_mu_);
    std::ofstream(*options_.journal, std::ios::app) << line;
    if (options_.meter) options_.meter->add_disk_bytes(line.size());
  }
  update_ram();
  http::reply_json(res, {{"ids", ids}, {"skipped", skipped}});
  if (options_.meter) options_.meter->add_net_bytes(res.body.size());
}

void MemoryService::handle_search(const httplib::Request& req, httplib::Response& res) {
  telemetry::CpuScope cpu(options_.meter);
  if (options_.meter) options_.meter->add_net_bytes(req.body.size());
  if (!available_) {
    http::reply_json(res, {{"error", "memory backend unavailable"}}, 503);
    return;
  }
  std::string query;
  std::size_t k = kDefaultTopK;
  try {
    auto body = nlohmann::json::parse(req.body);
    query = body.at("query").get<std::string>();
    auto requested = body.value("k", static_cast<std::int64_t>(kDefaultTopK));
    if (requested < 1) throw ConfigError("k must be at least 1");
    k = static_cast<std::size_t>(requested);
  } catch (const std::exception& e) {
    http::reply_json(res, {{"error", std::string("bad search request: ") + e.what()}}, 400);
    return;
  }
  try {
    http::reply_json(res, search_results_to_json(backend_->search(query, k)));
  } catch (const EmptyText&) {
    http::reply_json(res, {{"results", nlohmann::json::array()}});
  } catch (const BackendUnavailable& e) {
    http::reply_json(res, {{"error", e.what()}}, 503);
  }
  if (options_.meter) options_.meter->add_net_bytes(res.body.size());
}

}  // namespace memharness::memory
