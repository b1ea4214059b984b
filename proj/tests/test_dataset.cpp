#include <doctest.h>

#include <random>

#include "memharness/dataset.hpp"
#include "test_support.hpp"

using namespace memharness;
using namespace memharness::dataset;

namespace {

const char* kSnippet = R"([{
  "conversation": {
    "speaker_a": "Jon",
    "speaker_b": "Gina",
    "session_1_date_time": "4:04 pm on 20 January, 2023",
    "session_1": [
      {"speaker": "Gina", "dia_id": "D1:1", "text": "Hey Jon! Good to see you. What's up? Anything new?"}
    ]
  },
  "qa": []
}])";

}  // namespace

TEST_CASE("appendix snippet parses to one session with one turn") {
  auto corpus = parse_corpus_text(kSnippet);
  REQUIRE(corpus.conversations.size() == 1);
  const auto& conv = corpus.conversations[0].conversation;
  CHECK(conv.speaker_a == "Jon");
  CHECK(conv.speaker_b == "Gina");
  REQUIRE(conv.sessions.size() == 1);
  CHECK(format_date(conv.sessions[0].date()) == "2023-01-20");
  CHECK(conv.sessions[0].timestamp.minutes_of_day == 16 * 60 + 4);
  REQUIRE(conv.sessions[0].turns.size() == 1);
  CHECK(conv.sessions[0].turns[0].speaker == "Gina");
  CHECK(conv.sessions[0].turns[0].dia_id == "D1:1");

  auto order = turns_in_order(conv);
  REQUIRE(order.size() == 1);
  CHECK(order[0].session->index == 1);
  CHECK(order[0].turn->dia_id == "D1:1");
}

TEST_CASE("malformed corpora") {
  CHECK_THROWS_AS(parse_corpus_text("[]"), MalformedCorpus);
  CHECK_THROWS_AS(parse_corpus_text(R"([{"conversation": {"speaker_a": "A", "speaker_b": "B"}, "qa": []}])"),
                  MalformedCorpus);
  // speaker outside {speaker_a, speaker_b}
  CHECK_THROWS_AS(parse_corpus_text(R"([{"conversation": {"speaker_a": "A", "speaker_b": "B",
      "session_1_date_time": "1 May, 2023",
      "session_1": [{"speaker": "C", "dia_id": "D1:1", "text": "hi"}]}, "qa": []}])"),
                  MalformedCorpus);
  // gap in session numbering
  CHECK_THROWS_AS(parse_corpus_text(R"([{"conversation": {"speaker_a": "A", "speaker_b": "B",
      "session_1_date_time": "1 May, 2023",
      "session_1": [{"speaker": "A", "dia_id": "D1:1", "text": "hi"}],
      "session_3_date_time": "2 May, 2023",
      "session_3": [{"speaker": "B", "dia_id": "D3:1", "text": "yo"}]}, "qa": []}])"),
                  MalformedCorpus);
  // duplicate dia_id
  CHECK_THROWS_AS(parse_corpus_text(R"([{"conversation": {"speaker_a": "A", "speaker_b": "B",
      "session_1_date_time": "1 May, 2023",
      "session_1": [{"speaker": "A", "dia_id": "D1:1", "text": "hi"},
                    {"speaker": "B", "dia_id": "D1:1", "text": "yo"}]}, "qa": []}])"),
                  MalformedCorpus);
  CHECK_THROWS_AS(parse_corpus_text("not json"), MalformedCorpus);
}

TEST_CASE("session dates") {
  CHECK(format_date(normalize_date("4:04 pm on 20 January, 2023").date) == "2023-01-20");
  CHECK(format_date(normalize_date("12:00 am on 1 January, 2000").date) == "2000-01-01");
  CHECK(normalize_date("12:00 am on 1 January, 2000").minutes_of_day == 0);
  CHECK(format_date(normalize_date("11:59 pm on 29 February, 2024").date) == "2024-02-29");
  CHECK(normalize_date("11:59 pm on 29 February, 2024").minutes_of_day == 1439);
  CHECK(normalize_date("12:30 pm on 3 March, 2021").minutes_of_day == 12 * 60 + 30);
  // time of day is optional
  auto bare = normalize_date("8 May, 2023");
  CHECK(format_date(bare.date) == "2023-05-08");
  CHECK(bare.minutes_of_day == 0);

  CHECK_THROWS_AS(normalize_date("11:59 pm on 29 February, 2023"), DateParseError);
  CHECK_THROWS_AS(normalize_date("13:00 pm on 1 May, 2023"), DateParseError);
  CHECK_THROWS_AS(normalize_date("1 Smarch, 2023"), DateParseError);
  CHECK_THROWS_AS(normalize_date(""), DateParseError);
}

TEST_CASE("iso dates round-trip") {
  CHECK(format_date(parse_iso_date("2023-08-23")) == "2023-08-23");
  CHECK_THROWS_AS(parse_iso_date("2023-02-30"), DateParseError);
  CHECK_THROWS_AS(parse_iso_date("23-08-2023"), DateParseError);
}

TEST_CASE("mini fixture matches a hand count") {
  auto corpus = load_corpus_file(test_support::fixture("mini.json").string());
  REQUIRE(corpus.conversations.size() == 1);
  const auto& entry = corpus.conversations[0];
  CHECK(entry.conversation.id == "conv-mini");
  REQUIRE(entry.conversation.sessions.size() == 2);
  CHECK(entry.conversation.sessions[0].turns.size() == 3);
  CHECK(entry.conversation.sessions[1].turns.size() == 3);
  CHECK(format_date(entry.conversation.sessions[1].date()) == "2023-01-29");
  CHECK(entry.qa.size() == 5);
  CHECK(entry.qa[0].question == "What job did Jon lose?");
  CHECK(entry.qa[0].expected_answer == "banker");
  CHECK(entry.qa[4].category == 5);

  // hand enumeration of the file, in order
  const std::vector<std::string> expected = {"D1:1", "D1:2", "D1:3", "D2:1", "D2:2", "D2:3"};
  auto order = turns_in_order(entry.conversation);
  REQUIRE(order.size() == expected.size());
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i].turn->dia_id == expected[i]);
  CHECK(order[0].session->index == 1);
  CHECK(order[5].session->index == 2);
}

TEST_CASE("qa key is configurable") {
  auto j = nlohmann::json::parse(kSnippet);
  j[0].erase("qa");
  j[0]["questions"] = {{{"question", "Who?"}, {"answer", "Jon"}}};
  ParseOptions opts;
  opts.qa_key = "questions";
  auto corpus = parse_corpus(j, opts);
  REQUIRE(corpus.conversations[0].qa.size() == 1);
  CHECK(corpus.conversations[0].qa[0].expected_answer == "Jon");
  CHECK_FALSE(corpus.conversations[0].qa[0].category.has_value());
}

TEST_CASE("sessions of sizes [3,2] flatten to 5 turns, first three from session 1") {
  Corpus c = test_support::random_corpus(1, {3, 2});
  auto order = turns_in_order(c.conversations[0].conversation);
  REQUIRE(order.size() == 5);
  for (int i = 0; i < 3; ++i) CHECK(order[i].session->index == 1);
  CHECK(order[3].session->index == 2);
}

TEST_CASE("property: round-trip and turn counts over generated corpora") {
  std::mt19937_64 rng(20240101);
  for (int iter = 0; iter < 200; ++iter) {
    std::uniform_int_distribution<int> sessions(1, 6), turns(1, 5);
    std::vector<int> sizes(sessions(rng));
    for (auto& s : sizes) s = turns(rng);
    Corpus c = test_support::random_corpus(rng(), sizes);

    auto again = parse_corpus(to_locomo_json(c));
    REQUIRE(again == c);

    std::size_t sum = 0;
    for (const auto& s : c.conversations[0].conversation.sessions) sum += s.turns.size();
    auto order = turns_in_order(again.conversations[0].conversation);
    CHECK(order.size() == sum);

    // dates non-decreasing in the source stay non-decreasing, never re-sorted
    const auto& ss = again.conversations[0].conversation.sessions;
    for (std::size_t i = 1; i < ss.size(); ++i) {
      CHECK(ss[i].index == ss[i - 1].index + 1);
      CHECK(std::chrono::sys_days(ss[i - 1].date()) <= std::chrono::sys_days(ss[i].date()));
    }
  }
}
