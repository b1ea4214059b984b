#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "memharness/error.hpp"

namespace memharness::telemetry {

enum class Tier { cloud, edge };
std::string to_string(Tier t);
Tier parse_tier(const std::string& s);

enum class Phase { loading, qa };
std::string to_string(Phase p);
Phase parse_phase(const std::string& s);

struct ComponentLabel {
  std::string component;
  Tier tier = Tier::edge;
};

// Cumulative fields never decrease for a given component.
struct ResourceSample {
  std::string component;
  double timestamp_ms = 0;  // monotonic, relative to the registry epoch
  double cpu_time_ms = 0;
  std::uint64_t ram_bytes = 0;
  std::uint64_t disk_bytes_written = 0;
  std::uint64_t net_bytes = 0;
};

struct PhaseWindow {
  Phase phase = Phase::loading;
  double start_ms = 0;
  double end_ms = 0;
};

// Live counters for one component. Services charge their own work here.
class ComponentMeter {
 public:
  explicit ComponentMeter(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  void add_cpu_ns(std::uint64_t ns) { cpu_ns_ += ns; }
  void add_net_bytes(std::uint64_t n) { net_bytes_ += n; }
  void add_disk_bytes(std::uint64_t n) { disk_bytes_ += n; }
  void set_ram_bytes(std::uint64_t n) { ram_bytes_ = n; }

  std::uint64_t cpu_ns() const { return cpu_ns_; }
  std::uint64_t net_bytes() const { return net_bytes_; }
  std::uint64_t disk_bytes() const { return disk_bytes_; }
  std::uint64_t ram_bytes() const { return ram_bytes_; }

 private:
  std::string name_;
  std::atomic<std::uint64_t> cpu_ns_{0};
  std::atomic<std::uint64_t> net_bytes_{0};
  std::atomic<std::uint64_t> disk_bytes_{0};
  std::atomic<std::uint64_t> ram_bytes_{0};
};

// Charges the calling thread's CPU time between construction and
// destruction to a meter. A null meter makes it a no-op.
class CpuScope {
 public:
  explicit CpuScope(ComponentMeter* meter);
  ~CpuScope();
  CpuScope(const CpuScope&) = delete;
  CpuScope& operator=(const CpuScope&) = delete;

 private:
  ComponentMeter* meter_;
  std::uint64_t start_ns_ = 0;
};

std::uint64_t thread_cpu_ns();

class MeterRegistry {
 public:
  MeterRegistry() : epoch_(std::chrono::steady_clock::now()) {}

  // Returns the meter for `name`, creating it with `tier` on first use.
  ComponentMeter& meter(const std::string& name, Tier tier);
  std::vector<ComponentLabel> labels() const;
  std::optional<Tier> tier_of(const std::string& name) const;

  double now_ms() const;
  std::vector<ResourceSample> sample() const;
  // Flat "key value" lines, one per component counter.
  std::string render_text() const;

 private:
  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point epoch_;
  std::deque<ComponentMeter> meters_;
  std::map<std::string, Tier> tiers_;
};

// Samples a registry on a fixed interval on a background thread.
class Sampler {
 public:
  Sampler(const MeterRegistry& registry, std::chrono::milliseconds interval);
  ~Sampler();

  void start();
  void stop();
  // Takes a sample immediately, in addition to the periodic ones.
  void sample_now();
  std::vector<ResourceSample> samples() const;

 private:
  void run();

  const MeterRegistry& registry_;
  std::chrono::milliseconds interval_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::vector<ResourceSample> samples_;
  std::thread thread_;
};

struct LatencyStats {
  std::size_t count = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double max_ms = 0;

  static LatencyStats from(std::vector<double> latencies_ms);
};

struct MetricsRow {
  std::string experiment;  // network profile name
  Phase phase = Phase::loading;
  std::string memory_backend;
  Tier tier = Tier::cloud;
  double cpu_minutes = 0;
  double ram_mb = 0;
  double disk_mb = 0;
  double network_mb = 0;
  double duration_minutes = 0;
  std::uint64_t tokens = 0;
  LatencyStats latency;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  const MetricsRow* find(Phase phase, Tier tier) const;
};

enum class RamReduction { peak, mean };
RamReduction parse_ram_reduction(const std::string& s);

struct AggregateOptions {
  std::string experiment;
  std::string memory_backend;
  RamReduction ram = RamReduction::peak;
  std::map<std::pair<Phase, Tier>, std::uint64_t> tokens;
  std::map<Phase, std::vector<double>> latencies_ms;
};

inline constexpr double kBytesPerMb = 1024.0 * 1024.0;

// One row per (phase, tier). Throws MissingSamples when a labelled
// component has fewer than two samples inside a window.
MetricsTable aggregate(const std::vector<ResourceSample>& samples, const std::vector<PhaseWindow>& windows,
                       const std::vector<ComponentLabel>& labels, const AggregateOptions& options);

struct AnswerRecord {
  std::size_t index = 0;
  std::string question;
  std::string expected;
  std::string received;
  double string_sim = 0;
  double semantic_sim = 0;
  double final_sim = 0;
  std::string classification;
  std::optional<int> category;
};

struct CsvPaths {
  std::filesystem::path metrics;
  std::filesystem::path answers;
};

CsvPaths emit_csv(const MetricsTable& table, const std::vector<AnswerRecord>& answers,
                  const std::filesystem::path& dir, const std::string& backend, const std::string& profile);

MetricsTable read_metrics_csv(const std::filesystem::path& path);
std::vector<AnswerRecord> read_answers_csv(const std::filesystem::path& path);

}  // namespace memharness::telemetry
