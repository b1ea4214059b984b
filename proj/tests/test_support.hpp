#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "memharness/dataset.hpp"

namespace test_support {

inline std::filesystem::path source_dir() { return MEMHARNESS_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "fixtures" / name; }

// Fresh directory under the system temp dir, removed first if present.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("memharness-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline const std::vector<std::string>& month_names() {
  static const std::vector<std::string> m = {"January", "February", "March",     "April",   "May",      "June",
                                              "July",    "August",   "September", "October", "November", "December"};
  return m;
}

// A one-conversation LoCoMo document with the given per-session turn counts.
// Session dates never decrease.
inline nlohmann::json random_locomo(std::uint64_t seed, const std::vector<int>& sizes) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> words = {"dance", "studio", "Paris", "job", "store", "guinea", "pig", "I",
                                          "my",    "found",  "lost",  "a",   "the",   "went",   "Oscar"};
  nlohmann::json conv = {{"speaker_a", "Ann"}, {"speaker_b", "Bo"}};
  int year = 2020 + static_cast<int>(rng() % 4), month = 1, day = 1;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    day += static_cast<int>(rng() % 9);
    while (day > 28) {
      day -= 28;
      if (++month > 12) month = 1, ++year;
    }
    int hour = 1 + static_cast<int>(rng() % 12), minute = static_cast<int>(rng() % 60);
    char raw[80];
    std::snprintf(raw, sizeof raw, "%d:%02d %s on %d %s, %d", hour, minute, (rng() % 2) ? "pm" : "am", day,
                  month_names()[month - 1].c_str(), year);
    auto key = "session_" + std::to_string(s + 1);
    conv[key + "_date_time"] = raw;
    nlohmann::json turns = nlohmann::json::array();
    for (int t = 0; t < sizes[s]; ++t) {
      std::string text;
      int n = 1 + static_cast<int>(rng() % 8);
      for (int w = 0; w < n; ++w) text += (w ? " " : "") + words[rng() % words.size()];
      text += ".";
      turns.push_back({{"speaker", (rng() % 2) ? "Ann" : "Bo"},
                       {"dia_id", "D" + std::to_string(s + 1) + ":" + std::to_string(t + 1)},
                       {"text", text}});
    }
    conv[key] = turns;
  }
  return nlohmann::json::array({{{"sample_id", "gen-" + std::to_string(seed)},
                                 {"conversation", conv},
                                 {"qa", {{{"question", "Where is the studio?"}, {"answer", "Paris"}, {"category", 1}}}}}});
}

inline memharness::dataset::Corpus random_corpus(std::uint64_t seed, const std::vector<int>& sizes) {
  return memharness::dataset::parse_corpus(random_locomo(seed, sizes));
}

inline std::string random_string(std::mt19937_64& rng, std::size_t max_len) {
  static const std::string alphabet = "abcdefgh ijkXYZ  .'-";
  std::size_t len = rng() % (max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
  return s;
}

}  // namespace test_support
