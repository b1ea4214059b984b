#include "memharness/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace memharness::dataset {

namespace {

constexpr std::array<std::string_view, 12> kMonths = {
    "january", "february", "march",     "april",   "may",      "june",
    "july",    "august",   "september", "october", "november", "december"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int to_int(const std::string& s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DateParseError("not a number: '" + s + "'");
  }
  return value;
}

std::string text_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw MalformedCorpus(where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

// LoCoMo stores a few answers as numbers (years, counts).
std::string answer_text(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_null()) return {};
  return value.dump();
}

Conversation parse_conversation(const nlohmann::json& obj, std::string id) {
  if (!obj.is_object()) throw MalformedCorpus(id + ": 'conversation' is not an object");
  Conversation conv;
  conv.id = std::move(id);
  conv.speaker_a = text_field(obj, "speaker_a", conv.id);
  conv.speaker_b = text_field(obj, "speaker_b", conv.id);

  static const std::regex session_key(R"(session_(\d+))");
  std::map<int, const nlohmann::json*> by_index;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    std::smatch m;
    const std::string& key = it.key();
    if (std::regex_match(key, m, session_key)) {
      by_index[std::stoi(m[1].str())] = &it.value();
    }
  }
  if (by_index.empty()) throw MalformedCorpus(conv.id + ": conversation has no sessions");

  int expected = 1;
  for (const auto& [index, value] : by_index) {
    if (index != expected) {
      throw MalformedCorpus(conv.id + ": session indices not contiguous from 1 (found session_" +
                            std::to_string(index) + ", expected session_" +
                            std::to_string(expected) + ")");
    }
    ++expected;
    const std::string where = conv.id + "/session_" + std::to_string(index);
    if (!value->is_array() || value->empty()) throw MalformedCorpus(where + ": no turns");

    Session session;
    session.index = index;
    session.date_time_raw = text_field(obj, ("session_" + std::to_string(index) + "_date_time").c_str(), where);
    try {
      session.timestamp = normalize_date(session.date_time_raw);
    } catch (const DateParseError& e) {
      throw MalformedCorpus(where + ": " + e.what());
    }
    for (const auto& t : *value) {
      if (!t.is_object()) throw MalformedCorpus(where + ": turn is not an object");
      Turn turn{text_field(t, "speaker", where), text_field(t, "dia_id", where), text_field(t, "text", where)};
      if (turn.speaker.empty() || turn.text.empty()) {
        throw MalformedCorpus(where + ": empty speaker or text in " + turn.dia_id);
      }
      if (turn.speaker != conv.speaker_a && turn.speaker != conv.speaker_b) {
        throw MalformedCorpus(where + ": unknown speaker '" + turn.speaker + "'");
      }
      session.turns.push_back(std::move(turn));
    }
    conv.sessions.push_back(std::move(session));
  }

  std::vector<std::string> ids;
  for (const auto& s : conv.sessions) {
    for (const auto& t : s.turns) ids.push_back(t.dia_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw MalformedCorpus(conv.id + ": duplicate dia_id");
  }
  return conv;
}

std::vector<QaItem> parse_qa(const nlohmann::json& list, const std::string& where) {
  std::vector<QaItem> out;
  if (!list.is_array()) throw MalformedCorpus(where + ": Q&A list is not an array");
  for (const auto& q : list) {
    QaItem item;
    item.question = text_field(q, "question", where);
    if (item.question.empty()) throw MalformedCorpus(where + ": empty question");
    if (auto a = q.find("answer"); a != q.end()) {
      item.expected_answer = answer_text(*a);
    } else if (auto adv = q.find("adversarial_answer"); adv != q.end()) {
      item.expected_answer = answer_text(*adv);
    }
    if (auto c = q.find("category"); c != q.end() && c->is_number_integer()) {
      item.category = c->get<int>();
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

Date parse_iso_date(std::string_view text) {
  static const std::regex iso(R"((\d{4})-(\d{2})-(\d{2}))");
  std::string s(text);
  std::smatch m;
  if (!std::regex_match(s, m, iso)) throw DateParseError("not an ISO date: '" + s + "'");
  Date d{std::chrono::year{to_int(m[1])}, std::chrono::month{static_cast<unsigned>(to_int(m[2]))},
         std::chrono::day{static_cast<unsigned>(to_int(m[3]))}};
  if (!d.ok()) throw DateParseError("invalid calendar date: '" + s + "'");
  return d;
}

SessionTimestamp normalize_date(std::string_view raw) {
  static const std::regex pattern(
      R"(^\s*(?:(\d{1,2}):(\d{2})\s*([AaPp][Mm])\s+on\s+)?(\d{1,2})\s+([A-Za-z]+),?\s+(\d{4})\s*$)");
  std::string s(raw);
  std::smatch m;
  if (!std::regex_match(s, m, pattern)) throw DateParseError("unrecognized session date: '" + s + "'");

  SessionTimestamp ts;
  if (m[1].matched) {
    int hour = to_int(m[1]);
    int minute = to_int(m[2]);
    if (hour < 1 || hour > 12 || minute > 59) throw DateParseError("invalid time of day: '" + s + "'");
    bool pm = std::tolower(static_cast<unsigned char>(m[3].str()[0])) == 'p';
    hour %= 12;
    if (pm) hour += 12;
    ts.minutes_of_day = hour * 60 + minute;
  }

  auto month_name = lower(m[5].str());
  auto it = std::find(kMonths.begin(), kMonths.end(), month_name);
  if (it == kMonths.end()) throw DateParseError("unknown month '" + m[5].str() + "'");
  unsigned month = static_cast<unsigned>(it - kMonths.begin()) + 1;

  ts.date = Date{std::chrono::year{to_int(m[6])}, std::chrono::month{month},
                 std::chrono::day{static_cast<unsigned>(to_int(m[4]))}};
  if (!ts.date.ok()) throw DateParseError("invalid calendar date: '" + s + "'");
  return ts;
}

Corpus parse_corpus(const nlohmann::json& raw, const ParseOptions& options) {
  std::vector<const nlohmann::json*> records;
  if (raw.is_array()) {
    for (const auto& r : raw) records.push_back(&r);
  } else if (raw.is_object()) {
    records.push_back(&raw);
  } else {
    throw MalformedCorpus("corpus must be an object or an array of records");
  }

  Corpus corpus;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = *records[i];
    if (!rec.is_object()) throw MalformedCorpus("record " + std::to_string(i) + " is not an object");
    std::string id = "conv-" + std::to_string(i + 1);
    if (auto sid = rec.find("sample_id"); sid != rec.end() && sid->is_string()) id = sid->get<std::string>();

    auto conv = rec.find("conversation");
    if (conv == rec.end()) throw MalformedCorpus(id + ": missing 'conversation' object");

    CorpusEntry entry;
    entry.conversation = parse_conversation(*conv, id);
    if (auto qa = rec.find(options.qa_key); qa != rec.end()) entry.qa = parse_qa(*qa, id);
    corpus.conversations.push_back(std::move(entry));
  }
  if (corpus.conversations.empty()) throw MalformedCorpus("corpus holds no conversations");
  return corpus;
}

Corpus parse_corpus_text(std::string_view text, const ParseOptions& options) {
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedCorpus(std::string("invalid JSON: ") + e.what());
  }
  return parse_corpus(raw, options);
}

Corpus load_corpus_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw MalformedCorpus("cannot open corpus file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus_text(buf.str(), options);
}

nlohmann::json to_locomo_json(const Corpus& corpus, const ParseOptions& options) {
  auto out = nlohmann::json::array();
  for (const auto& entry : corpus.conversations) {
    const auto& c = entry.conversation;
    nlohmann::json conv = {{"speaker_a", c.speaker_a}, {"speaker_b", c.speaker_b}};
    for (const auto& s : c.sessions) {
      auto key = "session_" + std::to_string(s.index);
      auto turns = nlohmann::json::array();
      for (const auto& t : s.turns) {
        turns.push_back({{"speaker", t.speaker}, {"dia_id", t.dia_id}, {"text", t.text}});
      }
      conv[key] = std::move(turns);
      conv[key + "_date_time"] = s.date_time_raw;
    }
    auto qa = nlohmann::json::array();
    for (const auto& q : entry.qa) {
      nlohmann::json item = {{"question", q.question}, {"answer", q.expected_answer}};
      if (q.category) item["category"] = *q.category;
      qa.push_back(std::move(item));
    }
    out.push_back({{"sample_id", c.id}, {"conversation", std::move(conv)}, {options.qa_key, std::move(qa)}});
  }
  return out;
}

std::vector<SessionTurn> turns_in_order(const Conversation& conv) {
  std::vector<const Session*> sessions;
  for (const auto& s : conv.sessions) sessions.push_back(&s);
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const Session* a, const Session* b) { return a->index < b->index; });
  std::vector<SessionTurn> out;
  for (const auto* s : sessions) {
    for (const auto& t : s->turns) out.push_back({s, &t});
  }
  return out;
}

}  // namespace memharness::dataset
