#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "hipsgen/corpus.hpp"

namespace hipsgen {

// Recognizer rules, in tie-breaking order.
enum class RecognizerRule { CODE, DATETIME, PERSON, GAZETTEER, QUANTITY };

struct RecognizerConfig {
  std::set<RecognizerRule> enabled = {RecognizerRule::CODE, RecognizerRule::DATETIME, RecognizerRule::PERSON,
                                      RecognizerRule::GAZETTEER, RecognizerRule::QUANTITY};
  std::vector<std::string> loc_gazetteer;
  std::vector<std::string> org_gazetteer;
  std::vector<std::string> titles = {"Mr", "Ms", "Mrs", "Dr", "Prof"};

  // Throws CorpusError when no rule is enabled.
  void validate() const;
};

// One entry per non-empty line, UTF-8.
std::vector<std::string> load_gazetteer(const std::filesystem::path& path);

// Rule-based span finder used when gold annotations are unavailable. Every
// returned span is labelled DIRECT; spans never overlap and are sorted by
// start. Overlapping candidates are resolved by longest span, then earliest
// start, then rule order.
std::vector<EntitySpan> recognize(const std::string& text, const RecognizerConfig& config);

// `doc` with its spans replaced by recognize() output.
Document with_recognized_spans(const Document& doc, const RecognizerConfig& config);

}  // namespace hipsgen
