#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "memharness/experiment.hpp"
#include "test_support.hpp"

using namespace memharness;
using namespace memharness::experiment;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig mini_config(const std::filesystem::path& out, const std::string& backend = "vector") {
  ExperimentConfig cfg;
  cfg.backend = memory::BackendKind::parse(backend);
  cfg.corpus = test_support::fixture("mini.json");
  cfg.out_dir = out;
  cfg.sample_interval = std::chrono::milliseconds(100);
  return cfg;
}

CellStats cell(const std::string& sys, const std::string& profile, std::uint64_t c, std::uint64_t w,
               std::uint64_t i, double cost) {
  CellStats s{sys, profile, evaluation::AccuracyStats::from_counts(c, w, i), std::nullopt};
  costing::CostBreakdown b;
  b.cell(costing::Tier::cloud, costing::Category::compute) = cost;
  s.cost = b;
  return s;
}

}  // namespace

TEST_CASE("config validation and json round-trip") {
  auto cfg = mini_config("out");
  CHECK(cfg.effective_run_id() == "vector_unconstrained_seed7");
  CHECK_NOTHROW(cfg.validate());
  auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  auto bad = cfg;
  bad.threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.provider.kind = "openai-compatible";  // no url
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("one run writes every listed artifact and nothing else") {
  auto out = test_support::scratch_dir("run");
  auto r = run_experiment(mini_config(out));
  CHECK(r.manifest.status == "completed");
  CHECK(r.load.turns_sent == 6);
  CHECK(r.load.records_created == 5);
  CHECK(r.answers.size() == 5);
  CHECK(r.accuracy.n == 5);
  CHECK(r.accuracy.correct + r.accuracy.wrong + r.accuracy.idk == 5);

  std::set<std::string> listed(r.manifest.artifacts.begin(), r.manifest.artifacts.end());
  std::set<std::string> on_disk;
  for (const auto& e : std::filesystem::recursive_directory_iterator(r.dir)) {
    if (e.is_regular_file()) on_disk.insert(std::filesystem::relative(e.path(), r.dir).string());
  }
  CHECK(listed == on_disk);
  for (const char* name : {"manifest.json", "metrics_vector_unconstrained.csv", "answers_vector_unconstrained.csv",
                           "verdict.json", "report.md", "cost.json"}) {
    CHECK(on_disk.count(name) == 1);
  }

  auto manifest = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  CHECK(manifest.at("status") == "completed");
  CHECK(manifest.at("config").at("seed") == 7);
  CHECK(manifest.at("endpoints").contains("memory"));

  // token conservation inside one run
  CHECK(r.proxy_tokens.total == r.response_tokens);
  CHECK(r.proxy_tokens.requests == r.responses);

  auto csv = telemetry::read_answers_csv(r.dir / "answers_vector_unconstrained.csv");
  CHECK(csv.size() == 5);
  auto metrics = telemetry::read_metrics_csv(r.dir / "metrics_vector_unconstrained.csv");
  CHECK(metrics.rows.size() == 4);  // 2 phases x 2 tiers
}

TEST_CASE("a failing stage leaves a failed manifest behind") {
  auto out = test_support::scratch_dir("fail");
  auto cfg = mini_config(out);
  cfg.backend = memory::BackendKind::parse("external", "http://127.0.0.1:1");
  CHECK_THROWS_AS(run_experiment(cfg), StageError);
  auto manifest = nlohmann::json::parse(slurp(out / cfg.effective_run_id() / "manifest.json"));
  CHECK(manifest.at("status") == "failed");
  CHECK(manifest.contains("error"));
}

TEST_CASE("counts file parsing") {
  auto pricing = load_pricing(std::nullopt);
  auto counts = load_counts_file(test_support::fixture("paper_counts.json"), pricing);
  REQUIRE(counts.cells.size() == 4);
  CHECK(counts.cells[0].system == "Graphiti");
  CHECK(counts.cells[0].profile == "unconstrained");
  CHECK(counts.cells[0].accuracy.correct == 22);
  CHECK(counts.cells[0].accuracy.n == 199);
  CHECK(counts.cells[0].cost.has_value());

  nlohmann::json bad = {{"cells", {{{"system", "x"}, {"profile", "p"}, {"correct", 5}, {"wrong", 1}, {"idk", 1},
                                    {"questions", 10}}}}};
  CHECK_THROWS_AS(parse_counts(bad, pricing), InvalidCounts);
  CHECK_THROWS_AS(parse_counts(nlohmann::json::object(), pricing), InvalidCounts);
}

TEST_CASE("statistics over four cells follow the published comparison set") {
  std::vector<CellStats> cells = {cell("Graphiti", "unconstrained", 22, 60, 117, 1.402),
                                  cell("mem0", "unconstrained", 15, 53, 131, 1.0),
                                  cell("Graphiti", "constrained", 16, 50, 133, 1.2),
                                  cell("mem0", "constrained", 12, 51, 136, 1.1)};
  auto s = compute_statistics(cells, 0.05);
  CHECK(s.at("accuracy").size() == 4);
  REQUIRE(s.at("z_tests").size() == 4);
  const double z[] = {1.208, 0.784, 1.023, 0.598};
  for (int i = 0; i < 4; ++i) CHECK(std::abs(s.at("z_tests")[i].at("z").get<double>() - z[i]) < 0.005);
  for (const auto& row : s.at("accuracy")) CHECK(row.contains("ci"));
  CHECK(s.at("pareto").at("overall").at("dominant") == "mem0");
  CHECK(s.at("pareto").at("by_profile").size() == 2);

  auto report = render_statistics_report(s, "t");
  CHECK(report.find("| unconstrained | Graphiti | 199 | 22 | 60 | 117 |") != std::string::npos);
  CHECK(report.find("[0.074, 0.162]") != std::string::npos);
  CHECK(report.find("Overall: mem0 dominant") != std::string::npos);
}

TEST_CASE("statistics over one cell keep the counts only") {
  auto s = compute_statistics({cell("mem0", "unconstrained", 15, 53, 131, 1.0)}, 0.05);
  CHECK(s.at("accuracy").size() == 1);
  CHECK_FALSE(s.contains("z_tests"));
  CHECK_FALSE(s.contains("pareto"));
  CHECK(render_statistics_report(s, "t").find("statistics omitted") != std::string::npos);
}

TEST_CASE("a trade-off profile yields no overall winner") {
  std::vector<CellStats> cells = {cell("A", "unconstrained", 20, 80, 0, 1.0), cell("B", "unconstrained", 60, 40, 0, 2.0)};
  auto s = compute_statistics(cells, 0.05);
  CHECK(s.at("pareto").at("overall").at("dominant").is_null());
}

TEST_CASE("matrix config expands the factorial") {
  auto j = nlohmann::json::parse(slurp(test_support::fixture("matrix.json")));
  auto m = MatrixConfig::from_json(j, test_support::fixture("matrix.json").parent_path());
  REQUIRE(m.cells.size() == 4);
  std::set<std::string> ids;
  for (const auto& c : m.cells) {
    ids.insert(c.effective_run_id());
    CHECK(c.seed == 7);
    CHECK(c.corpus == test_support::fixture("mini.json"));
  }
  CHECK(ids == std::set<std::string>{"vector_unconstrained_seed7", "vector_constrained_seed7",
                                     "graph_unconstrained_seed7", "graph_constrained_seed7"});
  CHECK_THROWS_AS(MatrixConfig::from_json(nlohmann::json::object()), ConfigError);
}

TEST_CASE("incomplete matrix: a failed cell is reported, the rest still counted") {
  auto out = test_support::scratch_dir("matrix");
  MatrixConfig m;
  m.out_dir = out;
  m.matrix_id = "partial";
  m.cells.push_back(mini_config(out / "partial"));
  auto broken = mini_config(out / "partial");
  broken.backend = memory::BackendKind::parse("external", "http://127.0.0.1:1");
  m.cells.push_back(broken);
  auto r = run_matrix(m);
  CHECK_FALSE(r.complete);
  REQUIRE(r.cells.size() == 2);
  CHECK(r.cells[0].result.has_value());
  CHECK(r.cells[1].error.has_value());
  CHECK(r.verdict.at("complete") == false);
  CHECK(r.verdict.at("accuracy").size() == 1);
  CHECK(std::filesystem::exists(r.dir / "report.md"));
  CHECK(slurp(r.dir / "report.md").find("Matrix incomplete") != std::string::npos);
}
