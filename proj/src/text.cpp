#include "memharness/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace memharness::text {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",     "about", "above", "after", "again",  "all",   "also",   "am",    "an",     "and",
      "any",   "are",   "as",    "at",    "be",     "been",  "before", "being", "but",    "by",
      "can",   "could", "did",   "do",    "does",   "doing", "for",    "from",  "had",    "has",
      "have",  "having","he",    "her",   "here",   "hers",  "him",    "his",   "how",    "i",
      "i'm",   "i've",  "i'll",  "i'd",   "if",     "in",    "into",   "is",    "it",     "it's",
      "its",   "just",  "me",    "more",  "most",   "my",    "myself", "no",    "not",    "now",
      "of",    "off",   "on",    "once",  "only",   "or",    "other",  "our",   "ours",   "out",
      "over",  "own",   "really","she",   "so",     "some",  "such",   "than",  "that",   "the",
      "their", "them",  "then",  "there", "these",  "they",  "this",   "those", "to",     "too",
      "under", "up",    "very",  "was",   "we",     "were",  "what",   "what's","when",   "where",
      "which", "while", "who",   "whom",  "why",    "will",  "with",   "would", "you",    "your",
      "yours", "kind",  "don't", "didn't","doesn't"};
  return words;
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string normalize_space_lower(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<Sentence> split_sentences(std::string_view s) {
  std::vector<Sentence> out;
  std::string current;
  auto flush = [&](bool question) {
    auto t = trim(current);
    if (!t.empty()) out.push_back({std::move(t), question});
    current.clear();
  };
  for (char c : s) {
    if (c == '.' || c == '!' || c == '?') {
      flush(c == '?');
    } else {
      current.push_back(c);
    }
  }
  flush(false);
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto c = static_cast<unsigned char>(s[i]);
    bool inner_apostrophe = c == '\'' && !cur.empty() && i + 1 < s.size() &&
                            is_word_byte(static_cast<unsigned char>(s[i + 1]));
    if (is_word_byte(c) || inner_apostrophe) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view lower_word) { return stopwords().count(lower_word) > 0; }

std::string stem(std::string_view word) {
  std::string w = to_lower(word);
  if (w.size() > 2 && w.compare(w.size() - 2, 2, "'s") == 0) w.resize(w.size() - 2);
  if (w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's') w.pop_back();
  return w;
}

std::vector<std::string> content_words(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& w : words(s)) {
    auto lw = to_lower(w);
    if (is_stopword(lw)) continue;
    out.push_back(stem(lw));
  }
  return out;
}

bool is_capitalized(std::string_view word) {
  return !word.empty() && std::isupper(static_cast<unsigned char>(word.front()));
}

}  // namespace memharness::text
