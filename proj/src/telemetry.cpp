#include "memharness/telemetry.hpp"

#include <time.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace memharness::telemetry {

std::string to_string(Tier t) { return t == Tier::cloud ? "cloud" : "edge"; }

Tier parse_tier(const std::string& s) {
  if (s == "cloud") return Tier::cloud;
  if (s == "edge") return Tier::edge;
  throw ConfigError("unknown tier '" + s + "'");
}

std::string to_string(Phase p) { return p == Phase::loading ? "loading" : "qa"; }

Phase parse_phase(const std::string& s) {
  if (s == "loading") return Phase::loading;
  if (s == "qa") return Phase::qa;
  throw ConfigError("unknown phase '" + s + "'");
}

std::uint64_t thread_cpu_ns() {
  timespec ts{};
  ::clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000ULL + static_cast<std::uint64_t>(ts.tv_nsec);
}

CpuScope::CpuScope(ComponentMeter* meter) : meter_(meter) {
  if (meter_) start_ns_ = thread_cpu_ns();
}

CpuScope::~CpuScope() {
  if (meter_) {
    auto now = thread_cpu_ns();
    if (now > start_ns_) meter_->add_cpu_ns(now - start_ns_);
  }
}

ComponentMeter& MeterRegistry::meter(const std::string& name, Tier tier) {
  std::lock_guard lk(mu_);
  for (auto& m : meters_) {
    if (m.name() == name) return m;
  }
  tiers_[name] = tier;
  return meters_.emplace_back(name);
}

std::vector<ComponentLabel> MeterRegistry::labels() const {
  std::lock_guard lk(mu_);
  std::vector<ComponentLabel> out;
  for (const auto& m : meters_) out.push_back({m.name(), tiers_.at(m.name())});
  return out;
}

std::optional<Tier> MeterRegistry::tier_of(const std::string& name) const {
  std::lock_guard lk(mu_);
  auto it = tiers_.find(name);
  if (it == tiers_.end()) return std::nullopt;
  return it->second;
}

double MeterRegistry::now_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_).count();
}

std::vector<ResourceSample> MeterRegistry::sample() const {
  std::lock_guard lk(mu_);
  double now = now_ms();
  std::vector<ResourceSample> out;
  for (const auto& m : meters_) {
    out.push_back({m.name(), now, static_cast<double>(m.cpu_ns()) / 1e6, m.ram_bytes(), m.disk_bytes(),
                   m.net_bytes()});
  }
  return out;
}

std::string MeterRegistry::render_text() const {
  std::ostringstream out;
  for (const auto& s : sample()) {
    out << s.component << ".cpu_time_ms " << s.cpu_time_ms << "\n"
        << s.component << ".ram_bytes " << s.ram_bytes << "\n"
        << s.component << ".disk_bytes_written " << s.disk_bytes_written << "\n"
        << s.component << ".net_bytes " << s.net_bytes << "\n";
  }
  return out.str();
}

Sampler::Sampler(const MeterRegistry& registry, std::chrono::milliseconds interval)
    : registry_(registry), interval_(interval) {}

Sampler::~Sampler() { stop(); }

void Sampler::start() {
  if (thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void Sampler::stop() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Sampler::sample_now() {
  auto batch = registry_.sample();
  std::lock_guard lk(mu_);
  samples_.insert(samples_.end(), batch.begin(), batch.end());
}

std::vector<ResourceSample> Sampler::samples() const {
  std::lock_guard lk(mu_);
  return samples_;
}

void Sampler::run() {
  std::unique_lock lk(mu_);
  auto next = std::chrono::steady_clock::now();
  while (!stop_) {
    lk.unlock();
    auto batch = registry_.sample();
    lk.lock();
    samples_.insert(samples_.end(), batch.begin(), batch.end());
    next += interval_;
    cv_.wait_until(lk, next, [this] { return stop_; });
  }
}

LatencyStats LatencyStats::from(std::vector<double> v) {
  LatencyStats s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  auto rank = [&](double q) {
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(idx, 1, v.size()) - 1];
  };
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  s.max_ms = v.back();
  return s;
}

const MetricsRow* MetricsTable::find(Phase phase, Tier tier) const {
  for (const auto& r : rows) {
    if (r.phase == phase && r.tier == tier) return &r;
  }
  return nullptr;
}

RamReduction parse_ram_reduction(const std::string& s) {
  if (s == "peak") return RamReduction::peak;
  if (s == "mean") return RamReduction::mean;
  throw ConfigError("unknown RAM reduction '" + s + "'");
}

MetricsTable aggregate(const std::vector<ResourceSample>& samples, const std::vector<PhaseWindow>& windows,
                       const std::vector<ComponentLabel>& labels, const AggregateOptions& options) {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(windows[i].end_ms > windows[i].start_ms)) throw MissingSamples("empty window for phase " + to_string(windows[i].phase));
    for (std::size_t j = i + 1; j < windows.size(); ++j) {
      if (windows[i].start_ms < windows[j].end_ms && windows[j].start_ms < windows[i].end_ms) {
        throw ConfigError("phase windows overlap");
      }
    }
  }

  MetricsTable table;
  for (const auto& w : windows) {
    for (Tier tier : {Tier::cloud, Tier::edge}) {
      MetricsRow row;
      row.experiment = options.experiment;
      row.memory_backend = options.memory_backend;
      row.phase = w.phase;
      row.tier = tier;
      row.duration_minutes = (w.end_ms - w.start_ms) / 60'000.0;
      if (auto it = options.tokens.find({w.phase, tier}); it != options.tokens.end()) row.tokens = it->second;
      if (auto it = options.latencies_ms.find(w.phase); it != options.latencies_ms.end()) {
        row.latency = LatencyStats::from(it->second);
      }

      double ram_sum = 0;
      std::size_t ram_components = 0;
      for (const auto& label : labels) {
        if (label.tier != tier) continue;
        std::vector<const ResourceSample*> in;
        for (const auto& s : samples) {
          if (s.component == label.component && s.timestamp_ms >= w.start_ms && s.timestamp_ms <= w.end_ms) {
            in.push_back(&s);
          }
        }
        if (in.size() < 2) {
          throw MissingSamples("component '" + label.component + "' has " + std::to_string(in.size()) +
                               " samples in the " + to_string(w.phase) + " window");
        }
        std::stable_sort(in.begin(), in.end(), [](auto* a, auto* b) { return a->timestamp_ms < b->timestamp_ms; });
        const auto& first = *in.front();
        const auto& last = *in.back();
        row.cpu_minutes += std::max(0.0, last.cpu_time_ms - first.cpu_time_ms) / 60'000.0;
        row.disk_mb += static_cast<double>(last.disk_bytes_written - std::min(first.disk_bytes_written, last.disk_bytes_written)) / kBytesPerMb;
        row.network_mb += static_cast<double>(last.net_bytes - std::min(first.net_bytes, last.net_bytes)) / kBytesPerMb;

        double ram = 0;
        if (options.ram == RamReduction::peak) {
          for (auto* s : in) ram = std::max(ram, static_cast<double>(s->ram_bytes));
        } else {
          for (auto* s : in) ram += static_cast<double>(s->ram_bytes);
          ram /= static_cast<double>(in.size());
        }
        ram_sum += ram / kBytesPerMb;
        ++ram_components;
      }
      row.ram_mb = ram_components ? ram_sum / static_cast<double>(ram_components) : 0.0;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string num(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// RFC 4180 records; quoted fields may span lines.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* kMetricsHeader =
    "experiment,phase,memory,tier,cpu_minutes,ram_mb,disk_mb,network_mb,duration_minutes,tokens,"
    "latency_count,latency_mean_ms,latency_p50_ms,latency_p95_ms,latency_max_ms";
const char* kAnswersHeader =
    "index,question,expected_answer,received_answer,string_similarity,semantic_similarity,"
    "final_similarity,classification,category";

}  // namespace

CsvPaths emit_csv(const MetricsTable& table, const std::vector<AnswerRecord>& answers,
                  const std::filesystem::path& dir, const std::string& backend, const std::string& profile) {
  std::filesystem::create_directories(dir);
  CsvPaths paths{dir / ("metrics_" + backend + "_" + profile + ".csv"),
                 dir / ("answers_" + backend + "_" + profile + ".csv")};

  std::ofstream m(paths.metrics, std::ios::binary | std::ios::trunc);
  m << kMetricsHeader << "\n";
  for (const auto& r : table.rows) {
    m << csv_field(r.experiment) << ',' << to_string(r.phase) << ',' << csv_field(r.memory_backend) << ','
      << to_string(r.tier) << ',' << num(r.cpu_minutes) << ',' << num(r.ram_mb) << ',' << num(r.disk_mb)
      << ',' << num(r.network_mb) << ',' << num(r.duration_minutes) << ',' << r.tokens << ','
      << r.latency.count << ',' << num(r.latency.mean_ms) << ',' << num(r.latency.p50_ms) << ','
      << num(r.latency.p95_ms) << ',' << num(r.latency.max_ms) << "\n";
  }
  if (!m) throw Error("failed writing " + paths.metrics.string());

  std::ofstream a(paths.answers, std::ios::binary | std::ios::trunc);
  a << kAnswersHeader << "\n";
  for (const auto& r : answers) {
    a << r.index << ',' << csv_field(r.question) << ',' << csv_field(r.expected) << ','
      << csv_field(r.received) << ',' << num(r.string_sim, "%.6f") << ',' << num(r.semantic_sim, "%.6f")
      << ',' << num(r.final_sim, "%.6f") << ',' << r.classification << ','
      << (r.category ? std::to_string(*r.category) : std::string()) << "\n";
  }
  if (!a) throw Error("failed writing " + paths.answers.string());
  return paths;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  auto rows = read_csv(path);
  if (rows.empty()) throw Error(path.string() + ": empty CSV");
  MetricsTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 15) throw Error(path.string() + ": row " + std::to_string(i) + " has wrong column count");
    MetricsRow r;
    r.experiment = f[0];
    r.phase = parse_phase(f[1]);
    r.memory_backend = f[2];
    r.tier = parse_tier(f[3]);
    r.cpu_minutes = std::stod(f[4]);
    r.ram_mb = std::stod(f[5]);
    r.disk_mb = std::stod(f[6]);
    r.network_mb = std::stod(f[7]);
    r.duration_minutes = std::stod(f[8]);
    r.tokens = std::stoull(f[9]);
    r.latency.count = std::stoull(f[10]);
    r.latency.mean_ms = std::stod(f[11]);
    r.latency.p50_ms = std::stod(f[12]);
    r.latency.p95_ms = std::stod(f[13]);
    r.latency.max_ms = std::stod(f[14]);
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::vector<AnswerRecord> read_answers_csv(const std::filesystem::path& path) {
  auto rows = read_csv(path);
  if (rows.empty()) throw Error(path.string() + ": empty CSV");
  std::vector<AnswerRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 9) throw Error(path.string() + ": row " + std::to_string(i) + " has wrong column count");
    AnswerRecord r;
    r.index = std::stoull(f[0]);
    r.question = f[1];
    r.expected = f[2];
    r.received = f[3];
    r.string_sim = std::stod(f[4]);
    r.semantic_sim = std::stod(f[5]);
    r.final_sim = std::stod(f[6]);
    r.classification = f[7];
    if (!f[8].empty()) r.category = std::stoi(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace memharness::telemetry
