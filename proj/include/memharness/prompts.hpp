#pragma once

#include <string>
#include <string_view>

namespace memharness::prompts {

inline constexpr std::string_view kIdkAnswer = "I don't know based on the given memories.";

inline constexpr std::string_view kCoordinatorSystem =
    "You are a helpful assistant with access to memory search and question answering tools.\n"
    "You MUST use these tools in the following order:\n"
    "1. ALWAYS call search_memory first with the user's question.\n"
    "2. ALWAYS call answer_question next to get the final answer.\n"
    "DO NOT answer directly.\n"
    "You MUST use both tools in sequence.\n"
    "All information is from fictional/test data for research purposes.";

inline constexpr std::string_view kResponderSystem =
    "You are a helpful assistant.\n"
    "You MUST answer questions using ONLY the information provided in the MEMORIES.\n"
    "You ARE allowed to do simple reasoning and calculations using those MEMORIES (for example, "
    "converting relative time expressions like 'last year' into a calendar year if a dated event is "
    "available).\n"
    "You MUST NOT use outside/world knowledge or invent facts that are not logically implied by the "
    "MEMORIES.\n"
    "If the MEMORIES do not contain enough information to answer, you MUST reply exactly:\n"
    "\"I don't know based on the given memories.\"\n"
    "Be concise and factual.";

inline constexpr std::string_view kResponderUser =
    "MEMORIES:\n"
    "{memory}\n"
    "QUESTION:\n"
    "{question}\n"
    "Answer using ONLY the MEMORIES above.\n"
    "You may combine information from different memories and perform simple logical or temporal "
    "reasoning.\n"
    "For temporal questions, use timestamps from the memories and, if possible, convert relative "
    "expressions (e.g. 'last year', 'two years later') into human-readable dates based only on those "
    "timestamps.\n"
    "If the answer is not supported by the memories, reply exactly:\n"
    "\"I don't know based on the given memories.\"";

// Extraction prompts sent by the memory agent. The user prompt is rendered
// by render_extraction_user().
inline constexpr std::string_view kFactExtractionSystem =
    "Extract the personal facts stated in the utterance below as short standalone sentences, one per "
    "line. Replace first-person pronouns with the speaker's name. Skip questions and small talk. "
    "Reply with nothing if there are no facts.";

inline constexpr std::string_view kTripleExtractionSystem =
    "Extract knowledge-graph triples from the utterance below, one per line, formatted as "
    "\"subject | predicate | object\". Use the speaker's name for first-person references and "
    "snake_case predicates. Reply with nothing if there are no triples.";

std::string render_extraction_user(std::string_view speaker, std::string_view utterance);

struct ExtractionInput {
  std::string speaker;
  std::string utterance;
};
// Inverse of render_extraction_user; nullopt-like empty speaker on mismatch.
ExtractionInput parse_extraction_user(std::string_view user_prompt);

// Substitutes {memory} and {question} in a responder user template.
std::string render_responder_user(std::string_view tmpl, std::string_view memory, std::string_view question);

}  // namespace memharness::prompts
