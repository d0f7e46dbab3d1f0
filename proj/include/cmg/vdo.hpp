#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cmg/corpus.hpp"

namespace cmg::vdo {

struct SuffixRule {
  std::string suffix;
  std::string replacement;
};

/// Verb stems plus ordered inflection rules. A token is a verb when its
/// lowercase form is a stem or some rule rewrites it into one.
struct VerbLexicon {
  std::set<std::string> base_verbs;
  std::vector<SuffixRule> suffix_rules;

  /// Built-in list of common commit verbs ("merge" and "revert" excluded).
  static VerbLexicon builtin();

  /// One verb per line; '#' starts a comment. Uses the built-in suffix rules.
  static VerbLexicon load(const std::filesystem::path& path);
};

/// Tokens skipped when searching for the direct object.
const std::set<std::string>& skip_words();

/// Number of tokens after the verb searched for a direct object.
inline constexpr std::size_t kObjectWindow = 4;

bool is_verb(const std::string& token, const VerbLexicon& lexicon);

bool is_vdo(const TokenSequence& message, const VerbLexicon& lexicon);

struct FilterReport {
  std::size_t kept = 0;
  std::size_t removed = 0;
  /// kept / (kept + removed); 0 for an empty corpus.
  double kept_ratio = 0.0;
};

std::pair<std::vector<PreparedPair>, FilterReport> filter_corpus(const std::vector<PreparedPair>& pairs,
                                                                 const VerbLexicon& lexicon);

}  // namespace cmg::vdo
