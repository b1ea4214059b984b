#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memharness/error.hpp"

namespace memharness::netproxy {

using Clock = std::chrono::steady_clock;

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws ConfigError.
Endpoint parse_endpoint(const std::string& text);

enum class Direction { upstream, downstream, both };

Direction parse_direction(const std::string& text);
std::string to_string(Direction d);

struct ToxicConfig {
  int latency_ms = 0;
  int jitter_ms = 0;
  std::optional<std::int64_t> bandwidth_bytes_per_s;  // nullopt: unlimited
  Direction direction = Direction::both;

  // Throws ConfigError when jitter exceeds latency or the rate is not positive.
  void validate() const;
  bool applies_upstream() const { return direction != Direction::downstream; }
  bool applies_downstream() const { return direction != Direction::upstream; }
};

struct NetworkProfile {
  enum class Name { unconstrained, constrained };

  Name name = Name::unconstrained;
  ToxicConfig toxic;

  static NetworkProfile unconstrained();
  // 200 ms latency, 50 ms jitter, 1 MB/s, both directions.
  static NetworkProfile constrained();
  static NetworkProfile from_name(const std::string& name);

  std::string name_string() const;
};

// Delay drawn uniformly from [latency - jitter, latency + jitter], in ms.
double sample_delay_ms(int latency_ms, int jitter_ms, std::mt19937_64& rng);

struct Chunk {
  std::vector<char> bytes;
  Clock::time_point arrival;
  Clock::time_point due;       // earliest delivery time
  double sampled_delay_ms = 0;
};

// Stamps chunks with a delivery deadline. Deadlines never decrease, so a
// connection's chunks are delivered in the order they were read.
class LatencyToxic {
 public:
  LatencyToxic(int latency_ms, int jitter_ms, std::uint64_t seed);

  Chunk apply(std::vector<char> bytes, Clock::time_point arrival);

 private:
  int latency_ms_;
  int jitter_ms_;
  std::mt19937_64 rng_;
  Clock::time_point last_due_{};
};

inline constexpr std::size_t kDefaultBurstBytes = 64 * 1024;
inline constexpr std::size_t kChunkBytes = 16 * 1024;

// Token bucket pacing. The bucket starts empty so a transfer of B bytes
// never completes in less than B / rate seconds.
class TokenBucket {
 public:
  TokenBucket(std::int64_t rate_bytes_per_s, std::size_t burst_bytes = kDefaultBurstBytes);

  // Reserves `bytes` at time `now` and returns how long the caller must wait
  // before sending them. Pure bookkeeping; does not sleep.
  Clock::duration reserve(std::size_t bytes, Clock::time_point now);

  // reserve() followed by a sleep.
  void consume(std::size_t bytes);

  std::int64_t rate() const { return rate_; }
  std::size_t burst() const { return burst_; }

 private:
  std::int64_t rate_;
  std::size_t burst_;
  double tokens_ = 0;
  std::optional<Clock::time_point> last_;
};

struct ProxyStats {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t connections = 0;
  std::vector<double> added_delay_samples_ms;

  nlohmann::json to_json() const;
};

class Proxy {
 public:
  // Binds immediately; throws BindError. A listen port of 0 picks a free port.
  Proxy(Endpoint listen, Endpoint target, NetworkProfile profile, std::uint64_t seed = 1);
  ~Proxy();

  Proxy(const Proxy&) = delete;
  Proxy& operator=(const Proxy&) = delete;

  Endpoint listen_endpoint() const { return listen_; }
  const NetworkProfile& profile() const { return profile_; }

  ProxyStats stats() const;
  // Safe to call from any thread, more than once.
  void stop();

 private:
  class Connection;

  void accept_loop();
  void reap_finished();
  void record_delay(double ms);

  Endpoint listen_;
  Endpoint target_;
  NetworkProfile profile_;
  std::uint64_t seed_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  std::mutex connections_mu_;
  std::list<std::unique_ptr<Connection>> connections_;
  std::uint64_t next_connection_ = 0;

  std::atomic<std::uint64_t> bytes_up_{0};
  std::atomic<std::uint64_t> bytes_down_{0};
  std::atomic<std::uint64_t> connection_count_{0};
  mutable std::mutex delays_mu_;
  std::vector<double> delays_;
};

// Serves GET /stats with the proxy's ProxyStats as JSON.
class AdminServer {
 public:
  AdminServer(const Proxy& proxy, Endpoint listen);
  ~AdminServer();

  Endpoint listen_endpoint() const { return listen_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Endpoint listen_;
};

}  // namespace memharness::netproxy
