#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "memharness/agents.hpp"
#include "memharness/memory.hpp"
#include "test_support.hpp"

using namespace memharness;
using namespace memharness::memory;

namespace {

Date d(const char* iso) { return dataset::parse_iso_date(iso); }

RememberRequest req(const std::string& speaker, const std::string& text, const char* date = "2023-01-20",
                    const std::string& dia = "D1:1") {
  return {speaker, text, dia, d(date)};
}

std::shared_ptr<const Embedder> embedder() { return std::make_shared<HashingEmbedder>(); }

// Stores each mini.json turn in `backend` and returns the replay oracle's
// count: extractor outputs summed turn by turn.
std::pair<std::size_t, std::size_t> load_mini(Backend& backend, bool graph) {
  auto corpus = dataset::load_corpus_file(test_support::fixture("mini.json").string());
  std::size_t oracle = 0;
  for (auto st : dataset::turns_in_order(corpus.conversations[0].conversation)) {
    oracle += graph ? extract_triples(st.turn->speaker, st.turn->text).size()
                    : extract_facts(st.turn->speaker, st.turn->text).size();
    backend.remember({st.turn->speaker, st.turn->text, st.turn->dia_id, st.session->date()});
  }
  return {backend.record_count(), oracle};
}

}  // namespace

TEST_CASE("embedder is deterministic and unit length") {
  HashingEmbedder e;
  auto a = e.embed("Has a guinea pig named Oscar");
  auto b = e.embed("Has a guinea pig named Oscar");
  CHECK(a == b);  // bitwise
  REQUIRE(a.size() == HashingEmbedder::kDefaultDimension);
  CHECK(std::sqrt(dot(a, a)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(a, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(e.embed("   "), EmptyText);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("fact extraction golden lines for the fixture") {
  CHECK(extract_facts("Gina", "Hey Jon! Good to see you. What's up? Anything new?").empty());
  CHECK(extract_facts("Jon", "Ok.").empty());
  CHECK(extract_facts("Jon", "I lost my job as a banker last week. I want to open my own dance studio.") ==
        std::vector<std::string>{"Jon lost Jon's job as a banker last week", "Jon want to open Jon's own dance studio"});
  CHECK(extract_facts("Gina", "That is awesome! I started an online clothing store.") ==
        std::vector<std::string>{"Gina started an online clothing store"});
}

TEST_CASE("triple extraction golden triples") {
  auto t = extract_triples("Gina", "Sorry to hear that. I also lost my job at Door Dash this month.");
  CHECK(t == std::vector<TripleText>{{"Gina", "lost", "job"}, {"Gina", "lost_job_at", "Door Dash"}});
  CHECK(triple_sentence({"Jon", "lost_job_at", "Door Dash"}) == "Jon lost job at Door Dash");
  CHECK(extract_triples("Jon", "Ok.").empty());

  auto lines = format_triple_lines(t);
  CHECK(lines == "Gina | lost | job\nGina | lost_job_at | Door Dash\n");
  CHECK(parse_triple_lines(lines) == t);
  CHECK(parse_triple_lines("garbage line\n\n").empty());
}

TEST_CASE("mini fixture loads to golden record counts on both backends") {
  VectorBackend v(embedder(), deterministic_fact_extractor());
  auto [vn, voracle] = load_mini(v, false);
  CHECK(vn == 5);  // hand count: D1:2 gives 2 facts, D1:3, D2:1, D2:2 one each
  CHECK(vn == voracle);

  GraphBackend g(deterministic_triple_extractor());
  auto [gn, goracle] = load_mini(g, true);
  CHECK(gn == 9);  // 3 + 2 + 3 + 1
  CHECK(gn == goracle);
  CHECK(g.entity_count() == 10);

  for (const auto& r : v.search("dance studio", 20)) {
    CHECK_FALSE(r.record.text.empty());
    REQUIRE(r.record.embedding.has_value());
    CHECK(r.record.embedding->size() == HashingEmbedder::kDefaultDimension);
  }
}

TEST_CASE("remember stamps the session date and ignores empty extractions") {
  VectorBackend v(embedder(), deterministic_fact_extractor());
  CHECK(v.remember(req("Jon", "Ok.")).empty());
  CHECK(v.record_count() == 0);
  CHECK(v.remember(req("Gina", "Hey Jon! Good to see you. What's up? Anything new?")).size() ==
        extract_facts("Gina", "Hey Jon! Good to see you. What's up? Anything new?").size());

  auto ids = v.remember(req("Jon", "I found a great location for the dance studio in Paris.", "2023-01-29"));
  REQUIRE(ids.size() == 1);
  auto hits = v.search("dance studio Paris", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].record.id == ids[0]);
  CHECK(dataset::format_date(hits[0].record.date) == "2023-01-29");
  CHECK(hits[0].record.source_dia_id == "D1:1");
}

TEST_CASE("vector search: self-similarity and truncation") {
  FactExtractor verbatim = [](const RememberRequest& r) { return std::vector<std::string>{r.text}; };
  VectorBackend v(embedder(), verbatim);
  for (int i = 0; i < 10; ++i) v.remember(req("Jon", "fact number " + std::to_string(i) + " about dancing"));
  auto hits = v.search("fact number 7 about dancing", 20);
  REQUIRE(hits.size() == 10);
  CHECK(hits[0].record.text == "fact number 7 about dancing");
  CHECK(hits[0].score == doctest::Approx(1.0));
  CHECK(v.search("anything", 1).size() == 1);
  CHECK_THROWS_AS(v.search("anything", 0), ConfigError);
  CHECK_THROWS_AS(v.search("   ", 3), EmptyText);
}

TEST_CASE("graph search: worked retrieval example") {
  GraphBackend g(deterministic_triple_extractor());
  g.add_triple({"Melanie", "has_pet", "Oscar", d("2023-08-23")});
  g.add_triple({"Oscar", "is_a", "guinea_pig", d("2023-08-23")});
  auto hits = g.search("Oscar Melanie's pet?", 20);
  REQUIRE(hits.size() == 2);
  // hand-computed: S = {Melanie, Oscar}; first triple has both ends in S,
  // second has one end in S: 0.5 + 0.5 * 1/2
  CHECK(hits[0].record.text == "Melanie has pet Oscar");
  CHECK(hits[0].score == doctest::Approx(1.0));
  CHECK(hits[1].record.text == "Oscar is a guinea pig");
  CHECK(hits[1].score == doctest::Approx(0.75));

  // one-hop neighbour only: 0.5 * 1/2
  auto only_melanie = g.search("Tell me about Melanie", 20);
  REQUIRE(only_melanie.size() == 2);
  CHECK(only_melanie[0].score == doctest::Approx(1.0));  // one end in S, |S| = 1
  CHECK(only_melanie[1].score == doctest::Approx(0.25));
  CHECK(g.search("nothing matches here", 20).empty());
}

TEST_CASE("graph dedup is idempotent across repeated turns") {
  GraphBackend g(deterministic_triple_extractor());
  auto turn = req("Gina", "I also lost my job at Door Dash this month.");
  g.remember(turn);
  auto entities = g.entity_count();
  auto edges = g.record_count();
  g.remember(turn);
  CHECK(g.entity_count() == entities);
  CHECK(g.record_count() == 2 * edges);  // repeated facts are counted, not hidden

  g.add_triple({"gina", "likes", "DOOR DASH", d("2023-01-01")});
  CHECK(g.entity_count() == entities);
}

TEST_CASE("property: search(q, k) is a subset of search(q, k+1); scores sorted in [0,1]") {
  VectorBackend v(embedder(), deterministic_fact_extractor());
  GraphBackend g(deterministic_triple_extractor());
  load_mini(v, false);
  load_mini(g, true);
  auto corpus = dataset::load_corpus_file(test_support::fixture("mini.json").string());
  std::vector<std::string> queries;
  for (const auto& qa : corpus.conversations[0].qa) queries.push_back(qa.question);
  queries.push_back("Jon Gina dance studio Paris job");
  for (const Backend* b : {static_cast<const Backend*>(&v), static_cast<const Backend*>(&g)}) {
    for (const auto& q : queries) {
      for (std::size_t k = 1; k <= 12; ++k) {
        auto small = b->search(q, k);
        auto big = b->search(q, k + 1);
        CHECK(small.size() <= k);
        std::set<std::string> big_ids;
        for (const auto& r : big) big_ids.insert(r.record.id);
        for (const auto& r : small) CHECK(big_ids.count(r.record.id) == 1);
        for (std::size_t i = 0; i < big.size(); ++i) {
          CHECK(big[i].score >= 0.0);
          CHECK(big[i].score <= 1.0);
          if (i > 0) CHECK(big[i - 1].score >= big[i].score);
        }
      }
    }
  }
}

TEST_CASE("format_memories") {
  CHECK(format_memories({}) == "");
  SearchResult r;
  r.record.text = "Has a guinea pig named Oscar";
  r.record.date = d("2023-08-23");
  CHECK(format_memories({r}) == "[2023-08-23] Has a guinea pig named Oscar");

  std::vector<SearchResult> three(3);
  const char* texts[] = {"first", "second", "third"};
  const char* dates[] = {"2023-01-20", "2022-12-31", "2024-02-29"};
  for (int i = 0; i < 3; ++i) {
    three[i].record.text = texts[i];
    three[i].record.date = d(dates[i]);
    three[i].score = 1.0 - 0.1 * i;
  }
  CHECK(format_memories(three) == "[2023-01-20] first\n[2022-12-31] second\n[2024-02-29] third");
}

TEST_CASE("backend kinds") {
  CHECK(BackendKind::parse("mem0").type == BackendKind::Type::vector);
  CHECK(BackendKind::parse("graphiti").type == BackendKind::Type::graph);
  CHECK(BackendKind::parse("external", "http://127.0.0.1:9").url == "http://127.0.0.1:9");
  CHECK_THROWS_AS(BackendKind::parse("external"), ConfigError);
  CHECK_THROWS_AS(BackendKind::parse("external", "ftp://x"), ConfigError);
  CHECK_THROWS_AS(BackendKind::parse("sql"), ConfigError);
}

TEST_CASE("memory service over HTTP, snapshot and isolation") {
  auto dir = test_support::scratch_dir("memsvc");
  auto vector = std::make_shared<VectorBackend>(embedder(), deterministic_fact_extractor());
  auto graph = std::make_shared<GraphBackend>(deterministic_triple_extractor());
  telemetry::ComponentMeter meter("memory");
  ServiceOptions opts;
  opts.journal = dir / "journal.jsonl";
  opts.meter = &meter;
  MemoryService svc(vector, opts);
  agents::MemoryClient client(svc.base_url());
  CHECK(client.healthy());

  auto corpus = dataset::load_corpus_file(test_support::fixture("mini.json").string());
  auto report = agents::load_conversation(corpus.conversations[0].conversation, client);
  CHECK(report.turns_sent == 6);
  CHECK(report.records_created == 5);
  CHECK_FALSE(report.error.has_value());
  CHECK(vector->record_count() == 5);
  CHECK(graph->record_count() == 0);  // untouched

  auto hits = client.search("Where did Gina work?", 3);
  CHECK(hits.size() == 3);
  CHECK(meter.disk_bytes() == std::filesystem::file_size(dir / "journal.jsonl"));
  CHECK(meter.ram_bytes() > 0);

  httplib::Client raw(svc.base_url());
  auto bad = raw.Post("/search", R"({"query": "x", "k": 0})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto malformed = raw.Post("/remember", "{", "application/json");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);

  svc.set_available(false);
  CHECK_FALSE(client.healthy());
  CHECK_THROWS_AS(client.search("x", 1), BackendUnavailable);
  svc.set_available(true);

  vector->snapshot(dir / "vector.json");
  std::ifstream in(dir / "vector.json");
  auto snap = nlohmann::json::parse(in);
  CHECK(snap.size() == 5);
}

TEST_CASE("extraction failures: retried once, then skipped") {
  int calls = 0;
  FactExtractor flaky = [&](const RememberRequest& r) -> std::vector<std::string> {
    if (++calls % 2 == 1) throw ExtractionError("bad output");
    return {r.text};
  };
  auto v = std::make_shared<VectorBackend>(embedder(), flaky);
  MemoryService svc(v, {});
  agents::MemoryClient client(svc.base_url());
  auto first = client.remember(req("Jon", "I like tea."));
  CHECK_FALSE(first.skipped);
  CHECK(first.ids.size() == 1);
  CHECK(calls == 2);

  FactExtractor broken = [](const RememberRequest&) -> std::vector<std::string> { throw ExtractionError("no"); };
  auto v2 = std::make_shared<VectorBackend>(embedder(), broken);
  MemoryService svc2(v2, {});
  auto skipped = agents::MemoryClient(svc2.base_url()).remember(req("Jon", "I like tea."));
  CHECK(skipped.skipped);
  CHECK(skipped.ids.empty());
  CHECK(svc2.skipped() == 1);
}

TEST_CASE("external backend forwards to another memory service") {
  auto inner = std::make_shared<VectorBackend>(embedder(), deterministic_fact_extractor());
  MemoryService target(inner, {});
  auto ext = std::make_shared<ExternalBackend>(target.base_url());
  MemoryService front(ext, {});
  agents::MemoryClient client(front.base_url());
  auto r = client.remember(req("Jon", "I found a great location for the dance studio in Paris."));
  CHECK(r.ids.size() == 1);
  CHECK(inner->record_count() == 1);
  auto hits = client.search("dance studio", 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].record.text == "Jon found a great location for the dance studio in Paris");

  target.stop();
  CHECK_THROWS_AS(ext->search("dance", 1), BackendUnavailable);
}
