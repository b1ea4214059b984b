#include "memharness/memory.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "memharness/prompts.hpp"
#include "memharness/text.hpp"

namespace memharness::memory {

namespace {

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) {
    auto t = text::trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string lower(const std::string& s) { return text::to_lower(s); }

std::set<std::string> stem_set(const std::string& s) {
  std::set<std::string> out;
  for (const auto& w : text::words(s)) {
    auto lw = lower(w);
    if (!text::is_stopword(lw)) out.insert(text::stem(lw));
  }
  return out;
}

// Sort by score, keeping insertion order among ties, then truncate.
std::vector<SearchResult> rank(std::vector<SearchResult> results, std::size_t k) {
  std::stable_sort(results.begin(), results.end(),
                   [](const SearchResult& a, const SearchResult& b) { return a.score > b.score; });
  if (results.size() > k) results.resize(k);
  return results;
}

nlohmann::json record_json(const MemoryRecord& r) {
  return {{"id", r.id}, {"text", r.text}, {"date", dataset::format_date(r.date)}, {"speaker", r.speaker},
          {"dia_id", r.source_dia_id}};
}

}  // namespace

BackendKind BackendKind::parse(const std::string& name, const std::string& url) {
  if (name == "vector" || name == "mem0") return {Type::vector, {}};
  if (name == "graph" || name == "graphiti") return {Type::graph, {}};
  if (name == "external") {
    if (url.rfind("http://", 0) != 0 || url.size() <= 7) {
      throw ConfigError("external backend needs an http:// base URL, got '" + url + "'");
    }
    return {Type::external, url};
  }
  throw ConfigError("unknown memory backend '" + name + "'");
}

std::string BackendKind::name() const {
  switch (type) {
    case Type::vector: return "vector";
    case Type::graph: return "graph";
    case Type::external: return "external";
  }
  return "vector";
}

nlohmann::json RememberRequest::to_json() const {
  return {{"speaker", speaker}, {"text", text}, {"dia_id", dia_id}, {"session_date", dataset::format_date(session_date)}};
}

RememberRequest RememberRequest::from_json(const nlohmann::json& j) {
  RememberRequest r;
  r.speaker = j.at("speaker").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.dia_id = j.value("dia_id", std::string());
  r.session_date = dataset::parse_iso_date(j.at("session_date").get<std::string>());
  return r;
}

FactExtractor deterministic_fact_extractor() {
  return [](const RememberRequest& r) { return extract_facts(r.speaker, r.text); };
}

TripleExtractor deterministic_triple_extractor() {
  return [](const RememberRequest& r) { return extract_triples(r.speaker, r.text); };
}

namespace {

std::string ask_extractor(llm::Provider& provider, std::string_view system, const std::string& model,
                          const RememberRequest& r) {
  llm::ChatRequest req;
  req.system_prompt = std::string(system);
  req.user_prompt = prompts::render_extraction_user(r.speaker, r.text);
  req.model_name = model;
  try {
    return provider.chat(req).text;
  } catch (const Error& e) {
    throw ExtractionError(std::string("extraction provider failed: ") + e.what());
  }
}

}  // namespace

FactExtractor llm_fact_extractor(std::shared_ptr<llm::Provider> provider, std::string model) {
  return [provider, model](const RememberRequest& r) {
    return lines_of(ask_extractor(*provider, prompts::kFactExtractionSystem, model, r));
  };
}

TripleExtractor llm_triple_extractor(std::shared_ptr<llm::Provider> provider, std::string model) {
  return [provider, model](const RememberRequest& r) {
    return parse_triple_lines(ask_extractor(*provider, prompts::kTripleExtractionSystem, model, r));
  };
}

VectorBackend::VectorBackend(std::shared_ptr<const Embedder> embedder, FactExtractor extractor)
    : embedder_(std::move(embedder)), extractor_(std::move(extractor)) {}

std::vector<std::string> VectorBackend::remember(const RememberRequest& req) {
  std::vector<MemoryRecord> fresh;
  for (auto& fact : extractor_(req)) {
    if (text::trim(fact).empty()) continue;
    MemoryRecord r;
    r.embedding = embedder_->embed(fact);
    r.text = std::move(fact);
    r.date = req.session_date;
    r.speaker = req.speaker;
    r.source_dia_id = req.dia_id;
    fresh.push_back(std::move(r));
  }
  std::vector<std::string> ids;
  std::unique_lock lk(mu_);
  for (auto& r : fresh) {
    r.id = "mem-" + std::to_string(records_.size() + 1);
    ids.push_back(r.id);
    records_.push_back(std::move(r));
  }
  return ids;
}

std::vector<SearchResult> VectorBackend::search(const std::string& query, std::size_t k) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  auto q = embedder_->embed(query);
  std::shared_lock lk(mu_);
  std::vector<SearchResult> results;
  results.reserve(records_.size());
  for (const auto& r : records_) {
    double score = (1.0 + cosine(q, *r.embedding)) / 2.0;
    results.push_back({r, std::clamp(score, 0.0, 1.0)});
  }
  lk.unlock();
  return rank(std::move(results), k);
}

std::size_t VectorBackend::record_count() const {
  std::shared_lock lk(mu_);
  return records_.size();
}

std::uint64_t VectorBackend::approx_bytes() const {
  std::shared_lock lk(mu_);
  std::uint64_t bytes = 0;
  for (const auto& r : records_) {
    bytes += sizeof(MemoryRecord) + r.id.size() + r.text.size() + r.speaker.size() + r.source_dia_id.size();
    if (r.embedding) bytes += r.embedding->size() * sizeof(double);
  }
  return bytes;
}

void VectorBackend::snapshot(const std::filesystem::path& path) const {
  std::shared_lock lk(mu_);
  auto out = nlohmann::json::array();
  for (const auto& r : records_) out.push_back(record_json(r));
  std::ofstream(path) << out.dump(2) << "\n";
}

GraphBackend::GraphBackend(TripleExtractor extractor, int hops) : extractor_(std::move(extractor)), hops_(hops) {
  if (hops_ < 0) throw ConfigError("graph expansion depth must be non-negative");
}

std::size_t GraphBackend::entity_id(const std::string& name) {
  auto key = lower(text::trim(name));
  auto it = entity_index_.find(key);
  if (it != entity_index_.end()) return it->second;
  entity_names_.push_back(text::trim(name));
  entity_index_[key] = entity_names_.size() - 1;
  return entity_names_.size() - 1;
}

std::string GraphBackend::add_triple_locked(const Triple& t, const std::string& speaker, const std::string& dia_id) {
  if (text::trim(t.subject).empty() || text::trim(t.predicate).empty() || text::trim(t.object).empty()) {
    throw ExtractionError("triple with an empty part");
  }
  Edge e;
  e.subject = entity_id(t.subject);
  e.object = entity_id(t.object);
  e.triple = t;
  e.record.id = "edge-" + std::to_string(edges_.size() + 1);
  e.record.text = triple_sentence({t.subject, t.predicate, t.object});
  e.record.date = t.date;
  e.record.speaker = speaker;
  e.record.source_dia_id = dia_id;
  edges_.push_back(std::move(e));
  return edges_.back().record.id;
}

std::string GraphBackend::add_triple(const Triple& t, const std::string& speaker, const std::string& dia_id) {
  std::unique_lock lk(mu_);
  return add_triple_locked(t, speaker, dia_id);
}

std::vector<std::string> GraphBackend::remember(const RememberRequest& req) {
  auto extracted = extractor_(req);
  std::vector<std::string> ids;
  std::unique_lock lk(mu_);
  for (const auto& t : extracted) {
    if (text::trim(t.subject).empty() || text::trim(t.predicate).empty() || text::trim(t.object).empty()) continue;
    ids.push_back(add_triple_locked({t.subject, t.predicate, t.object, req.session_date}, req.speaker, req.dia_id));
  }
  return ids;
}

std::vector<SearchResult> GraphBackend::search(const std::string& query, std::size_t k) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  auto query_words = stem_set(query);

  std::shared_lock lk(mu_);
  const std::size_t n = entity_names_.size();
  constexpr int kUnreached = -1;
  std::vector<int> distance(n, kUnreached);
  std::deque<std::size_t> frontier;
  std::size_t matched = 0;
  for (std::size_t id = 0; id < n; ++id) {
    auto name_words = stem_set(entity_names_[id]);
    if (name_words.empty()) continue;
    bool all = std::all_of(name_words.begin(), name_words.end(),
                           [&](const std::string& w) { return query_words.count(w) > 0; });
    if (all) {
      distance[id] = 0;
      frontier.push_back(id);
      ++matched;
    }
  }
  if (matched == 0) return {};

  // Breadth-first expansion up to hops_ over undirected edges.
  std::vector<std::vector<std::size_t>> adjacency(n);
  for (const auto& e : edges_) {
    adjacency[e.subject].push_back(e.object);
    adjacency[e.object].push_back(e.subject);
  }
  while (!frontier.empty()) {
    auto id = frontier.front();
    frontier.pop_front();
    if (distance[id] >= hops_) continue;
    for (auto next : adjacency[id]) {
      if (distance[next] == kUnreached) {
        distance[next] = distance[id] + 1;
        frontier.push_back(next);
      }
    }
  }

  const double seeds = static_cast<double>(std::min<std::size_t>(matched, 2));
  std::vector<SearchResult> results;
  for (const auto& e : edges_) {
    int ds = distance[e.subject];
    int dobj = distance[e.object];
    int nearest = kUnreached;
    for (int d : {ds, dobj}) {
      if (d != kUnreached && (nearest == kUnreached || d < nearest)) nearest = d;
    }
    if (nearest == kUnreached) continue;
    double ends = (ds == nearest ? 1.0 : 0.0) + (dobj == nearest && e.object != e.subject ? 1.0 : 0.0);
    double score = nearest == 0 ? 0.5 + 0.5 * std::min(1.0, ends / seeds) : 0.5 / nearest * ends / 2.0;
    results.push_back({e.record, std::clamp(score, 0.0, 1.0)});
  }
  lk.unlock();
  return rank(std::move(results), k);
}

std::size_t GraphBackend::record_count() const {
  std::shared_lock lk(mu_);
  return edges_.size();
}

std::size_t GraphBackend::entity_count() const {
  std::shared_lock lk(mu_);
  return entity_names_.size();
}

std::vector<Triple> GraphBackend::triples() const {
  std::shared_lock lk(mu_);
  std::vector<Triple> out;
  for (const auto& e : edges_) out.push_back(e.triple);
  return out;
}

std::uint64_t GraphBackend::approx_bytes() const {
  std::shared_lock lk(mu_);
  std::uint64_t bytes = 0;
  for (const auto& name : entity_names_) bytes += 2 * (sizeof(std::string) + name.size()) + sizeof(std::size_t);
  for (const auto& e : edges_) {
    bytes += sizeof(Edge) + e.record.id.size() + e.record.text.size() + e.triple.subject.size() +
             e.triple.predicate.size() + e.triple.object.size() + e.record.speaker.size();
  }
  return bytes;
}

void GraphBackend::snapshot(const std::filesystem::path& path) const {
  std::shared_lock lk(mu_);
  auto edges = nlohmann::json::array();
  for (const auto& e : edges_) {
    auto j = record_json(e.record);
    j["subject"] = e.triple.subject;
    j["predicate"] = e.triple.predicate;
    j["object"] = e.triple.object;
    edges.push_back(std::move(j));
  }
  nlohmann::json out = {{"entities", entity_names_}, {"edges", std::move(edges)}};
  std::ofstream(path) << out.dump(2) << "\n";
}

std::string format_memories(const std::vector<SearchResult>& results) {
  std::string out;
  for (const auto& r : results) {
    if (!out.empty()) out.push_back('\n');
    out += "[" + dataset::format_date(r.record.date) + "] " + r.record.text;
  }
  return out;
}

nlohmann::json search_results_to_json(const std::vector<SearchResult>& results) {
  auto arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"id", r.record.id}, {"text", r.record.text}, {"date", dataset::format_date(r.record.date)},
                   {"score", r.score}});
  }
  return {{"results", arr}};
}

}  // namespace memharness::memory
