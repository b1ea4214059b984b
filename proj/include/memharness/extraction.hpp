#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memharness::memory {

// Deterministic stand-ins for the LLM extraction step of the reference
// backends. Both skip questions and sentences that carry no first-person
// statement or named entity.

// One fact line per qualifying sentence, with first-person pronouns
// replaced by the speaker's name ("I lost my job" -> "Jon lost Jon's job").
std::vector<std::string> extract_facts(std::string_view speaker, std::string_view utterance);

struct TripleText {
  std::string subject;
  std::string predicate;  // lowercase words joined by '_'
  std::string object;

  bool operator==(const TripleText&) const = default;
};

// Rule-based subject-verb-object extraction. The subject is the speaker for
// first-person sentences, or a leading proper noun. The first verb after it
// is the predicate and the following noun phrase the object; each trailing
// prepositional phrase adds a triple whose predicate folds in the verb,
// object and preposition ("lost_job_at" -> "Door Dash").
std::vector<TripleText> extract_triples(std::string_view speaker, std::string_view utterance);

// "Jon lost_job_at Door Dash" -> "Jon lost job at Door Dash"
std::string triple_sentence(const TripleText& t);

// Wire format used between the memory agent and an extraction provider:
// one "subject | predicate | object" line per triple.
std::string format_triple_lines(const std::vector<TripleText>& triples);
std::vector<TripleText> parse_triple_lines(std::string_view text);

}  // namespace memharness::memory
