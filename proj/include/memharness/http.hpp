#pragma once

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "memharness/error.hpp"

namespace memharness::http {

// An httplib server running on its own thread. Routes are registered on
// `server()` before start().
class BackgroundServer {
 public:
  BackgroundServer() : server_(std::make_unique<httplib::Server>()) {}
  ~BackgroundServer() { stop(); }

  BackgroundServer(const BackgroundServer&) = delete;
  BackgroundServer& operator=(const BackgroundServer&) = delete;

  httplib::Server& server() { return *server_; }

  // Port 0 binds an ephemeral port. Returns the bound port; throws BindError.
  int start(const std::string& host, int port) {
    host_ = host;
    if (port == 0) {
      port_ = server_->bind_to_any_port(host);
    } else {
      port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw BindError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_->stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

inline void reply_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Splits "http://host:port[/prefix]" into the scheme-host-port part and the
// path prefix, as httplib::Client wants them apart.
struct SplitUrl {
  std::string origin;
  std::string prefix;
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace memharness::http
