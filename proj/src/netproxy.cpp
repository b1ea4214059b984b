#include "memharness/netproxy.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>

#include "memharness/http.hpp"

namespace memharness::netproxy {

namespace {

constexpr std::size_t kMaxDelaySamples = 1 << 20;

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  auto port = std::to_string(ep.port);
  int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) return nullptr;
  return res;
}

int connect_to(const Endpoint& ep) {
  addrinfo* res = resolve(ep, false);
  if (!res) return -1;
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    close_fd(fd);
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

bool send_all(int fd, const char* data, std::size_t size) {
  while (size > 0) {
    ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

// Closes the socket with an RST instead of a FIN.
void reset_fd(int& fd) {
  linger lg{1, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_LINGER, &lg, sizeof lg);
  close_fd(fd);
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint must be host:port, got '" + text + "'");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  try {
    std::size_t used = 0;
    ep.port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("bad port in endpoint '" + text + "'");
  }
  if (ep.port < 0 || ep.port > 65535) throw ConfigError("port out of range in '" + text + "'");
  if (ep.host.empty()) ep.host = "127.0.0.1";
  return ep;
}

Direction parse_direction(const std::string& text) {
  if (text == "upstream") return Direction::upstream;
  if (text == "downstream") return Direction::downstream;
  if (text == "both") return Direction::both;
  throw ConfigError("unknown direction '" + text + "'");
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::upstream: return "upstream";
    case Direction::downstream: return "downstream";
    case Direction::both: return "both";
  }
  return "both";
}

void ToxicConfig::validate() const {
  if (latency_ms < 0 || jitter_ms < 0) throw ConfigError("latency and jitter must be non-negative");
  if (jitter_ms > latency_ms) throw ConfigError("jitter must not exceed latency");
  if (bandwidth_bytes_per_s && *bandwidth_bytes_per_s <= 0) {
    throw ConfigError("bandwidth must be positive (omit it for unlimited)");
  }
}

NetworkProfile NetworkProfile::unconstrained() { return {Name::unconstrained, ToxicConfig{}}; }

NetworkProfile NetworkProfile::constrained() {
  ToxicConfig t;
  t.latency_ms = 200;
  t.jitter_ms = 50;
  t.bandwidth_bytes_per_s = 1'000'000;
  t.direction = Direction::both;
  return {Name::constrained, t};
}

NetworkProfile NetworkProfile::from_name(const std::string& name) {
  if (name == "unconstrained") return unconstrained();
  if (name == "constrained") return constrained();
  throw ConfigError("unknown network profile '" + name + "'");
}

std::string NetworkProfile::name_string() const {
  return name == Name::constrained ? "constrained" : "unconstrained";
}

double sample_delay_ms(int latency_ms, int jitter_ms, std::mt19937_64& rng) {
  if (jitter_ms == 0) return latency_ms;
  std::uniform_real_distribution<double> dist(latency_ms - jitter_ms, latency_ms + jitter_ms);
  return dist(rng);
}

LatencyToxic::LatencyToxic(int latency_ms, int jitter_ms, std::uint64_t seed)
    : latency_ms_(latency_ms), jitter_ms_(jitter_ms), rng_(seed) {}

Chunk LatencyToxic::apply(std::vector<char> bytes, Clock::time_point arrival) {
  Chunk c;
  c.bytes = std::move(bytes);
  c.arrival = arrival;
  c.sampled_delay_ms = sample_delay_ms(latency_ms_, jitter_ms_, rng_);
  auto delay = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double, std::milli>(c.sampled_delay_ms));
  c.due = std::max(arrival + delay, last_due_);
  last_due_ = c.due;
  return c;
}

TokenBucket::TokenBucket(std::int64_t rate_bytes_per_s, std::size_t burst_bytes)
    : rate_(rate_bytes_per_s), burst_(burst_bytes) {
  if (rate_ <= 0) throw ConfigError("token bucket rate must be positive");
  if (burst_ == 0) throw ConfigError("token bucket burst must be positive");
}

Clock::duration TokenBucket::reserve(std::size_t bytes, Clock::time_point now) {
  using Seconds = std::chrono::duration<double>;
  if (!last_) last_ = now;
  Clock::time_point start = std::max(now, *last_);
  if (now > *last_) {
    tokens_ = std::min<double>(static_cast<double>(burst_),
                               tokens_ + Seconds(now - *last_).count() * static_cast<double>(rate_));
  }
  double need = static_cast<double>(bytes);
  if (tokens_ >= need) {
    tokens_ -= need;
    last_ = start;
    return start - now;
  }
  double deficit = need - tokens_;
  auto wait = std::chrono::duration_cast<Clock::duration>(Seconds(deficit / static_cast<double>(rate_)));
  tokens_ = 0;
  last_ = start + wait;
  return *last_ - now;
}

void TokenBucket::consume(std::size_t bytes) {
  auto wait = reserve(bytes, Clock::now());
  if (wait > Clock::duration::zero()) std::this_thread::sleep_for(wait);
}

nlohmann::json ProxyStats::to_json() const {
  return {{"bytes_up", bytes_up},
          {"bytes_down", bytes_down},
          {"connections", connections},
          {"added_delay_samples_ms", added_delay_samples_ms}};
}

// One accepted client. Each direction has a reader (recv, shape, stamp) and
// a writer (wait for the deadline, send) joined by a queue.
class Proxy::Connection {
 public:
  Connection(Proxy& owner, int client_fd, int target_fd, std::uint64_t seed)
      : owner_(owner), fds_{client_fd, target_fd} {
    const auto& toxic = owner.profile_.toxic;
    // a zero-latency, unlimited profile is plain pass-through
    const bool active = toxic.latency_ms > 0 || toxic.bandwidth_bytes_per_s.has_value();
    pipes_[0].toxic_on = active && toxic.applies_upstream();
    pipes_[1].toxic_on = active && toxic.applies_downstream();
    for (int i = 0; i < 2; ++i) {
      auto& p = pipes_[i];
      p.latency = std::make_unique<LatencyToxic>(toxic.latency_ms, toxic.jitter_ms, seed * 2 + i);
      if (p.toxic_on && toxic.bandwidth_bytes_per_s) {
        p.bucket = std::make_unique<TokenBucket>(*toxic.bandwidth_bytes_per_s);
      }
    }
    for (int i = 0; i < 2; ++i) {
      pipes_[i].reader = std::thread([this, i] { read_loop(i); });
      pipes_[i].writer = std::thread([this, i] { write_loop(i); });
    }
  }

  ~Connection() {
    abort();
    join();
    close_fd(fds_[0]);
    close_fd(fds_[1]);
  }

  bool finished() const { return done_count_.load() == 2; }

  void abort() {
    aborted_ = true;
    for (int fd : fds_) {
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& p : pipes_) {
      std::lock_guard lk(p.mu);
      p.cv.notify_all();
    }
  }

  void join() {
    for (auto& p : pipes_) {
      if (p.reader.joinable()) p.reader.join();
      if (p.writer.joinable()) p.writer.join();
    }
  }

 private:
  struct Pipe {
    bool toxic_on = false;
    std::unique_ptr<LatencyToxic> latency;
    std::unique_ptr<TokenBucket> bucket;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Chunk> queue;
    bool eof = false;
    std::thread reader;
    std::thread writer;
  };

  // Direction 0 reads the client and writes the target; direction 1 the reverse.
  void read_loop(int dir) {
    auto& p = pipes_[dir];
    int src = fds_[dir];
    std::vector<char> buf(kChunkBytes);
    while (!aborted_) {
      ssize_t n = ::recv(src, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      std::vector<char> bytes(buf.begin(), buf.begin() + n);
      Chunk chunk;
      if (p.toxic_on) {
        if (p.bucket) p.bucket->consume(bytes.size());
        chunk = p.latency->apply(std::move(bytes), Clock::now());
      } else {
        chunk.bytes = std::move(bytes);
        chunk.arrival = chunk.due = Clock::now();
      }
      {
        std::lock_guard lk(p.mu);
        p.queue.push_back(std::move(chunk));
      }
      p.cv.notify_one();
    }
    {
      std::lock_guard lk(p.mu);
      p.eof = true;
    }
    p.cv.notify_one();
  }

  void write_loop(int dir) {
    auto& p = pipes_[dir];
    int dst = fds_[1 - dir];
    auto& counter = dir == 0 ? owner_.bytes_up_ : owner_.bytes_down_;
    bool ok = true;
    while (true) {
      Chunk chunk;
      {
        std::unique_lock lk(p.mu);
        p.cv.wait(lk, [&] { return aborted_ || p.eof || !p.queue.empty(); });
        if (aborted_) break;
        if (p.queue.empty()) break;  // eof and drained
        chunk = std::move(p.queue.front());
        p.queue.pop_front();
      }
      if (p.toxic_on) {
        std::this_thread::sleep_until(chunk.due);
        owner_.record_delay(std::chrono::duration<double, std::milli>(Clock::now() - chunk.arrival).count());
      }
      if (!send_all(dst, chunk.bytes.data(), chunk.bytes.size())) {
        ok = false;
        break;
      }
      counter += chunk.bytes.size();
    }
    if (ok && !aborted_) {
      ::shutdown(dst, SHUT_WR);
    } else {
      abort();
    }
    done_count_++;
  }

  Proxy& owner_;
  int fds_[2];
  Pipe pipes_[2];
  std::atomic<bool> aborted_{false};
  std::atomic<int> done_count_{0};
};

Proxy::Proxy(Endpoint listen, Endpoint target, NetworkProfile profile, std::uint64_t seed)
    : listen_(std::move(listen)), target_(std::move(target)), profile_(std::move(profile)), seed_(seed) {
  profile_.toxic.validate();
  addrinfo* res = resolve(listen_, true);
  if (!res) throw BindError("cannot resolve listen endpoint " + listen_.to_string());
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  bool ok = listen_fd_ >= 0 && ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0 &&
            ::listen(listen_fd_, 128) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    std::string why = std::strerror(errno);
    close_fd(listen_fd_);
    throw BindError("cannot listen on " + listen_.to_string() + ": " + why);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  listen_.port = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

Proxy::~Proxy() { stop(); }

void Proxy::stop() {
  if (stopping_.exchange(true)) {
    if (acceptor_.joinable()) acceptor_.join();
    return;
  }
  if (acceptor_.joinable()) acceptor_.join();
  close_fd(listen_fd_);
  std::list<std::unique_ptr<Connection>> conns;
  {
    std::lock_guard lk(connections_mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) c->abort();
  conns.clear();
}

void Proxy::accept_loop() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 50);
    if (rc <= 0) {
      reap_finished();
      continue;
    }
    int client = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) continue;
    int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    int target = connect_to(target_);
    if (target < 0) {
      reset_fd(client);
      continue;
    }
    connection_count_++;
    std::lock_guard lk(connections_mu_);
    connections_.push_back(std::make_unique<Connection>(*this, client, target, seed_ + next_connection_++));
  }
}

void Proxy::reap_finished() {
  std::list<std::unique_ptr<Connection>> done;
  {
    std::lock_guard lk(connections_mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->finished()) {
        done.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
}

void Proxy::record_delay(double ms) {
  std::lock_guard lk(delays_mu_);
  if (delays_.size() < kMaxDelaySamples) delays_.push_back(ms);
}

ProxyStats Proxy::stats() const {
  ProxyStats s;
  s.bytes_up = bytes_up_.load();
  s.bytes_down = bytes_down_.load();
  s.connections = connection_count_.load();
  std::lock_guard lk(delays_mu_);
  s.added_delay_samples_ms = delays_;
  return s;
}

struct AdminServer::Impl {
  http::BackgroundServer server;
};

AdminServer::AdminServer(const Proxy& proxy, Endpoint listen) : impl_(std::make_unique<Impl>()) {
  impl_->server.server().Get("/stats", [&proxy](const httplib::Request&, httplib::Response& res) {
    http::reply_json(res, proxy.stats().to_json());
  });
  listen_ = listen;
  listen_.port = impl_->server.start(listen.host, listen.port);
}

AdminServer::~AdminServer() { stop(); }

void AdminServer::stop() { impl_->server.stop(); }

}  // namespace memharness::netproxy
