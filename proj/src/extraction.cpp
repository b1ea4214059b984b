#include "memharness/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "memharness/text.hpp"

namespace memharness::memory {

namespace {

using Set = std::unordered_set<std::string_view>;

const Set kFirstPerson = {"i", "i'm", "i've", "i'll", "i'd", "me", "my", "mine", "myself", "we", "our"};
const Set kPossessive = {"my", "our"};
const Set kAuxiliaries = {"also", "just",   "really",  "am",    "is",     "are",   "was",
                          "were", "have",   "has",     "had",   "will",   "would", "finally",
                          "recently", "still", "never", "already", "actually", "do", "did",
                          "been", "be",     "can",     "could", "i'm",    "i've",  "i'll", "i'd"};
const Set kPrepositions = {"as",   "at",    "in",     "on",     "for",   "to",     "with", "from",
                           "about", "of",   "by",     "into",   "near",  "after",  "before",
                           "during", "since", "like", "around", "over"};
const Set kDroppedInPhrase = {"a",    "an",    "the",  "my",    "his",   "her",   "their",    "our",
                              "your", "its",   "some", "this",  "that",  "these", "those",    "own",
                              "last", "next",  "week", "month", "year",  "today", "yesterday",
                              "tomorrow", "ago", "night", "morning", "weekend", "me", "myself",
                              "very", "really", "so", "too"};

std::string lower(std::string_view s) { return text::to_lower(s); }

std::optional<std::string> pronoun_replacement(std::string_view lw, std::string_view speaker) {
  std::string s(speaker);
  if (lw == "i" || lw == "me" || lw == "myself" || lw == "we") return s;
  if (lw == "my" || lw == "mine" || lw == "our") return s + "'s";
  if (lw == "i'm") return s + " is";
  if (lw == "i've") return s + " has";
  if (lw == "i'll") return s + " will";
  if (lw == "i'd") return s + " would";
  return std::nullopt;
}

bool names_entity(const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto lw = lower(tokens[i]);
    if (kFirstPerson.count(lw)) return true;
    if (i > 0 && text::is_capitalized(tokens[i])) return true;
  }
  return false;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back(sep);
    out += p;
  }
  return out;
}

std::vector<std::string> clean_phrase(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (!kDroppedInPhrase.count(lower(t))) out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<std::string> extract_facts(std::string_view speaker, std::string_view utterance) {
  std::vector<std::string> facts;
  for (const auto& sentence : text::split_sentences(utterance)) {
    if (sentence.question) continue;
    auto tokens = text::words(sentence.text);
    if (tokens.size() < 3 || !names_entity(tokens)) continue;
    std::vector<std::string> out;
    for (const auto& t : tokens) {
      if (auto r = pronoun_replacement(lower(t), speaker)) {
        out.push_back(*r);
      } else {
        out.push_back(t);
      }
    }
    auto line = join(out, ' ');
    line[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
    facts.push_back(std::move(line));
  }
  return facts;
}

std::vector<TripleText> extract_triples(std::string_view speaker, std::string_view utterance) {
  std::vector<TripleText> triples;
  for (const auto& sentence : text::split_sentences(utterance)) {
    if (sentence.question) continue;
    auto tokens = text::words(sentence.text);
    if (tokens.size() < 3) continue;

    std::string subject;
    std::size_t pos = 0;
    auto fp = std::find_if(tokens.begin(), tokens.end(),
                           [](const std::string& t) { return kFirstPerson.count(lower(t)) > 0; });
    if (fp != tokens.end()) {
      pos = static_cast<std::size_t>(fp - tokens.begin());
      subject = std::string(speaker);
      if (kPossessive.count(lower(*fp)) && pos + 1 < tokens.size()) {
        subject += "'s " + tokens[pos + 1];
        ++pos;
      }
      ++pos;
    } else if (text::is_capitalized(tokens[0]) && !text::is_stopword(lower(tokens[0]))) {
      while (pos < tokens.size() && text::is_capitalized(tokens[pos])) ++pos;
      std::vector<std::string> name(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
      subject = join(name, ' ');
    } else {
      continue;
    }

    // Skip auxiliaries and adverbs that precede the main verb.
    while (pos + 1 < tokens.size() && kAuxiliaries.count(lower(tokens[pos]))) {
      auto next = lower(tokens[pos + 1]);
      if (text::is_stopword(next) && !kAuxiliaries.count(next)) break;
      ++pos;
    }
    if (pos >= tokens.size()) continue;
    std::string verb = lower(tokens[pos]);
    if (text::is_capitalized(tokens[pos]) || kPrepositions.count(verb)) continue;
    ++pos;

    std::vector<std::string> direct;
    std::vector<std::pair<std::string, std::vector<std::string>>> phrases;
    for (; pos < tokens.size(); ++pos) {
      auto lw = lower(tokens[pos]);
      if (kPrepositions.count(lw)) {
        phrases.push_back({lw, {}});
      } else if (phrases.empty()) {
        direct.push_back(tokens[pos]);
      } else {
        phrases.back().second.push_back(tokens[pos]);
      }
    }
    direct = clean_phrase(direct);

    std::string head = verb;
    if (!direct.empty()) {
      triples.push_back({subject, verb, join(direct, ' ')});
      std::vector<std::string> lowered;
      for (const auto& d : direct) lowered.push_back(lower(d));
      head += "_" + join(lowered, '_');
    }
    for (auto& [prep, phrase] : phrases) {
      auto np = clean_phrase(phrase);
      if (np.empty()) continue;
      triples.push_back({subject, head + "_" + prep, join(np, ' ')});
    }
  }
  return triples;
}

std::string triple_sentence(const TripleText& t) {
  auto spaced = [](std::string s) {
    std::replace(s.begin(), s.end(), '_', ' ');
    return s;
  };
  return spaced(t.subject) + " " + spaced(t.predicate) + " " + spaced(t.object);
}

std::string format_triple_lines(const std::vector<TripleText>& triples) {
  std::string out;
  for (const auto& t : triples) out += t.subject + " | " + t.predicate + " | " + t.object + "\n";
  return out;
}

std::vector<TripleText> parse_triple_lines(std::string_view input) {
  std::vector<TripleText> out;
  std::istringstream in{std::string(input)};
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      auto bar = line.find('|', start);
      parts.push_back(text::trim(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    if (parts.size() != 3) continue;
    if (parts[0].empty() || parts[1].empty() || parts[2].empty()) continue;
    out.push_back({parts[0], parts[1], parts[2]});
  }
  return out;
}

}  // namespace memharness::memory
