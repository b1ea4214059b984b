#include "memharness/llm.hpp"

namespace memharness::llm {

nlohmann::json CountingProxy::Totals::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& [key, usage] : by_phase_component) {
    auto row = usage.to_json();
    row["phase"] = key.first;
    row["component"] = key.second;
    rows.push_back(std::move(row));
  }
  return {{"by_phase_component", rows}, {"total", total.to_json()}, {"requests", requests}, {"unparsed", unparsed}};
}

CountingProxy::CountingProxy(std::string target_base_url, const std::string& host, int port,
                             telemetry::ComponentMeter* meter)
    : target_base_url_(std::move(target_base_url)), meter_(meter) {
  auto& s = server_.server();
  s.Post(R"(/v1/.*)", [this](const httplib::Request& req, httplib::Response& res) { forward(req, res); });
  s.Post("/admin/phase", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      set_phase(nlohmann::json::parse(req.body).at("phase").get<std::string>());
      http::reply_json(res, {{"phase", phase()}});
    } catch (const nlohmann::json::exception& e) {
      http::reply_json(res, {{"error", e.what()}}, 400);
    }
  });
  s.Get("/admin/usage", [this](const httplib::Request&, httplib::Response& res) {
    http::reply_json(res, totals().to_json());
  });
  server_.start(host, port);
}

CountingProxy::~CountingProxy() { server_.stop(); }

void CountingProxy::set_phase(std::string phase) {
  std::lock_guard lk(mu_);
  phase_ = std::move(phase);
}

std::string CountingProxy::phase() const {
  std::lock_guard lk(mu_);
  return phase_;
}

CountingProxy::Totals CountingProxy::totals() const {
  std::lock_guard lk(mu_);
  return totals_;
}

void CountingProxy::forward(const httplib::Request& req, httplib::Response& res) {
  telemetry::CpuScope cpu(meter_);
  auto url = http::split_url(target_base_url_);
  httplib::Client client(url.origin);
  client.set_read_timeout(120, 0);

  httplib::Headers headers;
  for (const auto& [k, v] : req.headers) {
    if (k == "Authorization" || k == kComponentHeader) headers.emplace(k, v);
  }
  auto content_type = req.get_header_value("Content-Type");
  auto upstream = client.Post(url.prefix + req.path, headers, req.body,
                              content_type.empty() ? "application/json" : content_type);
  if (!upstream) {
    http::reply_json(res, {{"error", {{"message", "upstream failed: " + httplib::to_string(upstream.error())}}}}, 502);
    return;
  }

  res.status = upstream->status;
  auto upstream_type = upstream->get_header_value("Content-Type");
  res.set_content(upstream->body, upstream_type.empty() ? "application/json" : upstream_type);
  if (meter_) meter_->add_net_bytes(2 * (req.body.size() + upstream->body.size()));

  auto component = req.get_header_value(kComponentHeader);
  if (component.empty()) component = "unknown";

  std::lock_guard lk(mu_);
  ++totals_.requests;
  if (upstream->status != 200) return;
  try {
    auto usage = parse_usage(nlohmann::json::parse(upstream->body));
    totals_.by_phase_component[{phase_, component}] += usage;
    totals_.total += usage;
  } catch (const nlohmann::json::exception&) {
    ++totals_.unparsed;
  }
}

}  // namespace memharness::llm
