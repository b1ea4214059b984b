#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memharness/error.hpp"

namespace memharness::dataset {

using Date = std::chrono::year_month_day;

// "YYYY-MM-DD"
std::string format_date(const Date& date);
Date parse_iso_date(std::string_view text);

struct SessionTimestamp {
  Date date;
  int minutes_of_day = 0;  // 0..1439, 0 when the source omits the time
};

// Parses the LoCoMo session stamp "<h>:<mm> <am|pm> on <D> <Month>, <YYYY>".
// The leading "<h>:<mm> <am|pm> on" part is optional.
SessionTimestamp normalize_date(std::string_view raw);

struct Turn {
  std::string speaker;
  std::string dia_id;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Session {
  int index = 1;
  std::string date_time_raw;
  SessionTimestamp timestamp;
  std::vector<Turn> turns;

  const Date& date() const { return timestamp.date; }
  bool operator==(const Session& other) const {
    return index == other.index && date_time_raw == other.date_time_raw &&
           timestamp.date == other.timestamp.date &&
           timestamp.minutes_of_day == other.timestamp.minutes_of_day && turns == other.turns;
  }
};

struct Conversation {
  std::string id;
  std::string speaker_a;
  std::string speaker_b;
  std::vector<Session> sessions;

  bool operator==(const Conversation&) const = default;
};

struct QaItem {
  std::string question;
  std::string expected_answer;
  std::optional<int> category;

  bool operator==(const QaItem&) const = default;
};

struct CorpusEntry {
  Conversation conversation;
  std::vector<QaItem> qa;

  bool operator==(const CorpusEntry&) const = default;
};

struct Corpus {
  std::vector<CorpusEntry> conversations;

  bool operator==(const Corpus&) const = default;
};

struct ParseOptions {
  // Sibling key of "conversation" that holds the Q&A list.
  std::string qa_key = "qa";
};

Corpus parse_corpus(const nlohmann::json& raw, const ParseOptions& options = {});
Corpus parse_corpus_text(std::string_view text, const ParseOptions& options = {});
Corpus load_corpus_file(const std::string& path, const ParseOptions& options = {});

// Inverse of parse_corpus; re-parsing the result yields an equal Corpus.
nlohmann::json to_locomo_json(const Corpus& corpus, const ParseOptions& options = {});

struct SessionTurn {
  const Session* session;
  const Turn* turn;
};

// Sessions in index order, turns in utterance order. Pointers refer into `conv`.
std::vector<SessionTurn> turns_in_order(const Conversation& conv);

}  // namespace memharness::dataset
