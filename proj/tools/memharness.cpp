#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "memharness/experiment.hpp"
#include "memharness/netproxy.hpp"

namespace ex = memharness::experiment;
namespace np = memharness::netproxy;

namespace {

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

void print_run(const ex::RunResult& r) {
  const auto& a = r.accuracy;
  std::cout << "run dir: " << r.dir.string() << "\n"
            << "turns sent: " << r.load.turns_sent << ", records: " << r.load.records_created
            << ", skipped: " << r.load.skipped << "\n"
            << "questions: " << a.n << ", correct: " << a.correct << ", wrong: " << a.wrong << ", idk: " << a.idk
            << "\n"
            << "loading: " << r.loading_ms / 1000.0 << " s, qa: " << r.qa_ms / 1000.0 << " s\n"
            << "total cost: $" << r.cost.total() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memharness: memory backend testbed"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run one experiment cell");
  std::string backend = "vector", backend_url, profile = "unconstrained", corpus, out = "out", provider = "mock",
              provider_url, model = "mock", run_id, ram = "peak";
  std::string pricing;
  std::uint64_t seed = 7;
  std::size_t k = memharness::memory::kDefaultTopK, conversation = 0, max_questions = 0;
  double threshold = memharness::evaluation::kDefaultThreshold;
  int sample_ms = 1000, timeout_ms = 60'000;
  run->add_option("--backend", backend, "vector | graph | external")->check(CLI::IsMember({"vector", "graph", "external"}));
  run->add_option("--backend-url", backend_url, "Base URL of an external memory service");
  run->add_option("--profile", profile, "unconstrained | constrained")
      ->check(CLI::IsMember({"unconstrained", "constrained"}));
  run->add_option("--corpus", corpus, "LoCoMo-format corpus file")->required();
  run->add_option("--conversation", conversation, "Conversation index in the corpus");
  run->add_option("--seed", seed);
  run->add_option("--out", out, "Output directory");
  run->add_option("--run-id", run_id);
  run->add_option("--k", k, "Memories retrieved per question");
  run->add_option("--threshold", threshold, "Similarity needed for a correct answer");
  run->add_option("--provider", provider)->check(CLI::IsMember({"mock", "openai-compatible"}));
  run->add_option("--provider-url", provider_url);
  run->add_option("--model", model);
  run->add_option("--provider-timeout-ms", timeout_ms);
  run->add_option("--pricing", pricing, "Pricing config (JSON)");
  run->add_option("--sample-interval-ms", sample_ms);
  run->add_option("--ram-reduction", ram)->check(CLI::IsMember({"peak", "mean"}));
  run->add_option("--max-questions", max_questions, "Stop after this many questions (0 = all)");

  // matrix
  auto* matrix = app.add_subcommand("matrix", "Run a factorial matrix from a config file");
  std::string matrix_config;
  matrix->add_option("--config", matrix_config)->required()->check(CLI::ExistingFile);

  // stats
  auto* stats = app.add_subcommand("stats", "Statistics from recorded counts");
  std::string counts_file, stats_out, stats_pricing;
  bool stats_json = false;
  stats->add_option("--counts-file", counts_file)->required()->check(CLI::ExistingFile);
  stats->add_option("--pricing", stats_pricing);
  stats->add_option("--out", stats_out, "Write verdict.json and report.md here");
  stats->add_flag("--json", stats_json, "Print the verdict JSON instead of the report");

  // proxy
  auto* proxy = app.add_subcommand("proxy", "Run a network impairment proxy");
  std::string listen, target, admin, direction = "both";
  int latency = 0, jitter = 0;
  std::int64_t bandwidth = 0;
  std::uint64_t proxy_seed = 1;
  proxy->add_option("--listen", listen)->required();
  proxy->add_option("--target", target)->required();
  proxy->add_option("--latency-ms", latency);
  proxy->add_option("--jitter-ms", jitter);
  proxy->add_option("--bandwidth-bps", bandwidth, "Bytes per second, 0 = unlimited");
  proxy->add_option("--direction", direction)->check(CLI::IsMember({"upstream", "downstream", "both"}));
  proxy->add_option("--admin", admin, "host:port for GET /stats");
  proxy->add_option("--seed", proxy_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ex::ExperimentConfig cfg;
      cfg.backend = memharness::memory::BackendKind::parse(backend, backend_url);
      cfg.profile = np::NetworkProfile::from_name(profile);
      cfg.corpus = corpus;
      cfg.conversation_index = conversation;
      cfg.k = k;
      cfg.threshold = threshold;
      cfg.seed = seed;
      cfg.provider.kind = provider;
      cfg.provider.url = provider_url;
      cfg.provider.model = model;
      cfg.provider.timeout = std::chrono::milliseconds(timeout_ms);
      if (!pricing.empty()) cfg.pricing = pricing;
      cfg.out_dir = out;
      cfg.run_id = run_id;
      cfg.sample_interval = std::chrono::milliseconds(sample_ms);
      cfg.ram = memharness::telemetry::parse_ram_reduction(ram);
      if (max_questions > 0) cfg.max_questions = max_questions;
      print_run(ex::run_experiment(cfg));
      return 0;
    }
    if (*matrix) {
      std::ifstream in(matrix_config);
      auto j = nlohmann::json::parse(in);
      auto cfg = ex::MatrixConfig::from_json(j, std::filesystem::path(matrix_config).parent_path());
      auto result = ex::run_matrix(cfg);
      for (const auto& c : result.cells) {
        std::cout << c.run_id << ": " << (c.error ? "FAILED " + *c.error : std::string("ok")) << "\n";
      }
      std::cout << "matrix dir: " << result.dir.string() << "\n";
      return result.complete ? 0 : 1;
    }
    if (*stats) {
      auto model_prices = ex::load_pricing(stats_pricing.empty() ? std::nullopt : std::optional<std::filesystem::path>(stats_pricing));
      auto counts = ex::load_counts_file(counts_file, model_prices);
      auto verdict = ex::compute_statistics(counts.cells, counts.alpha);
      auto report = ex::render_statistics_report(verdict, "Statistics for " + counts_file);
      if (!stats_out.empty()) {
        std::filesystem::create_directories(stats_out);
        std::ofstream(std::filesystem::path(stats_out) / "verdict.json") << verdict.dump(2) << "\n";
        std::ofstream(std::filesystem::path(stats_out) / "report.md") << report;
      }
      std::cout << (stats_json ? verdict.dump(2) + "\n" : report);
      return 0;
    }
    if (*proxy) {
      // Block the signals before any thread starts so only sigwait sees them.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      np::NetworkProfile p = np::NetworkProfile::unconstrained();
      p.toxic.latency_ms = latency;
      p.toxic.jitter_ms = jitter;
      if (bandwidth > 0) p.toxic.bandwidth_bytes_per_s = bandwidth;
      p.toxic.direction = np::parse_direction(direction);
      if (latency > 0 || bandwidth > 0) p.name = np::NetworkProfile::Name::constrained;
      p.toxic.validate();
      np::Proxy px(np::parse_endpoint(listen), np::parse_endpoint(target), p, proxy_seed);
      std::unique_ptr<np::AdminServer> admin_server;
      if (!admin.empty()) admin_server = std::make_unique<np::AdminServer>(px, np::parse_endpoint(admin));
      std::cout << "proxy " << px.listen_endpoint().to_string() << " -> " << target;
      if (admin_server) std::cout << ", stats at http://" << admin_server->listen_endpoint().to_string() << "/stats";
      std::cout << std::endl;
      wait_for_signal();
      px.stop();
      std::cout << px.stats().to_json().dump() << std::endl;
      return 0;
    }
  } catch (const memharness::StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const memharness::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
