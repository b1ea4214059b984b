#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memharness::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
// Lowercase and collapse every whitespace run to a single space.
std::string normalize_space_lower(std::string_view s);

struct Sentence {
  std::string text;  // without the terminator
  bool question = false;
};

// Splits at '.', '!' and '?'; a trailing fragment without a terminator is
// kept as a statement.
std::vector<Sentence> split_sentences(std::string_view s);

// Word tokens: runs of letters, digits, apostrophes inside words, and bytes
// >= 0x80. Case is preserved.
std::vector<std::string> words(std::string_view s);

bool is_stopword(std::string_view lower_word);
// Lowercase, drop a possessive "'s", and a plural "s" on words longer than three letters.
std::string stem(std::string_view word);
// Stemmed non-stopword words.
std::vector<std::string> content_words(std::string_view s);

bool is_capitalized(std::string_view word);

}  // namespace memharness::text
