#include "cmg/vdo.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cmg::vdo {

namespace {

// Common commit-subject verbs. "merge" and "revert" are deliberately absent.
const char* const kBuiltinVerbs[] = {
    "add",       "adjust",    "allow",      "apply",     "avoid",     "bump",      "build",     "call",
    "catch",     "change",    "check",      "clean",     "cleanup",   "clear",     "close",     "collect",
    "comment",   "compute",   "configure",  "convert",   "copy",      "correct",   "create",    "declare",
    "define",    "delete",    "deprecate",  "detect",    "disable",   "display",   "document",  "drop",
    "enable",    "enforce",   "ensure",     "expand",    "expose",    "extend",    "extract",   "fill",
    "filter",    "finish",    "fix",        "force",     "format",    "generate",  "get",       "handle",
    "hide",      "ignore",    "implement",  "import",    "improve",   "include",   "increase",  "initialize",
    "inline",    "insert",    "install",    "introduce", "keep",      "limit",     "load",      "log",
    "make",      "mark",      "migrate",    "modify",    "move",      "optimize",  "override",  "parse",
    "pass",      "prevent",   "print",      "process",   "provide",   "put",       "raise",     "read",
    "rebuild",   "reduce",    "refactor",   "reformat",  "register",  "release",   "reload",    "remove",
    "rename",    "reorder",   "replace",    "report",    "require",   "reset",     "resolve",   "restore",
    "restructure", "return",  "reuse",      "rewrite",   "run",       "save",      "send",      "separate",
    "set",       "show",      "simplify",   "skip",      "sort",      "split",     "start",     "stop",
    "store",     "support",   "switch",     "throw",     "tidy",      "track",     "trim",      "tweak",
    "unify",     "update",    "upgrade",    "use",       "validate",  "verify",    "wrap",      "write",
};

std::string lowercase(const std::string& s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_punctuation_token(const std::string& t) {
  return t.size() == 1 && std::ispunct(static_cast<unsigned char>(t[0])) && t[0] != '_';
}

std::vector<SuffixRule> builtin_rules() {
  return {{"ies", "y"}, {"es", ""}, {"s", ""}, {"ed", ""}, {"ed", "e"}, {"ing", ""}, {"ing", "e"}};
}

}  // namespace

VerbLexicon VerbLexicon::builtin() {
  VerbLexicon lex;
  lex.base_verbs.insert(std::begin(kBuiltinVerbs), std::end(kBuiltinVerbs));
  lex.suffix_rules = builtin_rules();
  return lex;
}

VerbLexicon VerbLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open verb lexicon " + path.string());
  VerbLexicon lex;
  lex.suffix_rules = builtin_rules();
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    lex.base_verbs.insert(lowercase(line.substr(b, e - b + 1)));
  }
  return lex;
}

const std::set<std::string>& skip_words() {
  static const std::set<std::string> words = {"a", "an", "the", "some", "for", "to", "of", "in", "on", "with"};
  return words;
}

bool is_verb(const std::string& token, const VerbLexicon& lexicon) {
  const auto lower = lowercase(token);
  if (std::none_of(lower.begin(), lower.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
    return false;
  if (lexicon.base_verbs.count(lower)) return true;
  for (const auto& rule : lexicon.suffix_rules) {
    if (lower.size() <= rule.suffix.size() || !ends_with(lower, rule.suffix)) continue;
    const auto stem = lower.substr(0, lower.size() - rule.suffix.size()) + rule.replacement;
    if (lexicon.base_verbs.count(stem)) return true;
  }
  return false;
}

bool is_vdo(const TokenSequence& message, const VerbLexicon& lexicon) {
  if (message.empty() || !is_verb(message.front(), lexicon)) return false;
  const auto& skip = skip_words();
  const std::size_t end = std::min(message.size(), 1 + kObjectWindow);
  for (std::size_t i = 1; i < end; ++i) {
    const auto& t = message[i];
    if (is_punctuation_token(t) || skip.count(lowercase(t)) || is_verb(t, lexicon)) continue;
    return true;
  }
  return false;
}

std::pair<std::vector<PreparedPair>, FilterReport> filter_corpus(const std::vector<PreparedPair>& pairs,
                                                                 const VerbLexicon& lexicon) {
  std::vector<PreparedPair> kept;
  FilterReport report;
  for (const auto& p : pairs) {
    if (is_vdo(p.target, lexicon))
      kept.push_back(p);
    else
      ++report.removed;
  }
  report.kept = kept.size();
  if (!pairs.empty()) report.kept_ratio = static_cast<double>(report.kept) / static_cast<double>(pairs.size());
  return {std::move(kept), report};
}

}  // namespace cmg::vdo
