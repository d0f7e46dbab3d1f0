#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "cmg/qa.hpp"
#include "cmg/rng.hpp"

namespace fixtures {

/// Gold records whose diffs draw from a shared 50-token vocabulary; bad
/// records (median 0 or 1) additionally carry one of five marker tokens.
inline std::vector<cmg::qa::GoldRecord> separable_gold(std::size_t n, std::uint64_t seed) {
  cmg::Rng rng(seed);
  std::vector<cmg::qa::GoldRecord> gold;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bad = rng.uniform01() < 0.4;
    cmg::TokenSequence d;
    for (std::size_t j = 0, len = 10 + rng.uniform_index(10); j < len; ++j)
      d.push_back("tok" + std::to_string(rng.uniform_index(50)));
    if (bad) d.insert(d.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(d.size() + 1)),
                      "marker" + std::to_string(rng.uniform_index(5)));
    std::vector<int> scores;
    for (std::size_t k = 0, m = 1 + rng.uniform_index(3); k < m; ++k)
      scores.push_back(bad ? static_cast<int>(rng.uniform_index(2)) : 2 + static_cast<int>(rng.uniform_index(6)));
    gold.push_back(cmg::qa::GoldRecord::make("g" + std::to_string(i), std::move(d), std::move(scores)));
  }
  return gold;
}

}  // namespace fixtures

#include "cmg/corpus.hpp"

namespace fixtures {

/// 32 synthetic diffs; each message is a fixed function of the edited file
/// and the kind of edit.
inline std::vector<cmg::PreparedPair> toy_pairs() {
  const std::vector<std::string> files{"parser", "lexer", "cache", "router", "config", "logger", "socket", "buffer"};
  struct Edit {
    std::string added, removed, verb, object;
  };
  const std::vector<Edit> edits{
      {"if ( ptr == null ) return ;", "", "fix", "null pointer check"},
      {"log . debug ( msg ) ;", "", "add", "debug logging"},
      {"", "int unused_count = 0 ;", "remove", "unused variable"},
      {"timeout = 30 ;", "timeout = 10 ;", "increase", "default timeout"},
  };
  std::vector<cmg::PreparedPair> pairs;
  for (std::size_t f = 0; f < files.size(); ++f)
    for (std::size_t e = 0; e < edits.size(); ++e) {
      const auto& ed = edits[e];
      std::string diff = "diff --git a / src / " + files[f] + " . c b / src / " + files[f] + " . c @@ -1 +1 @@";
      if (!ed.removed.empty()) diff += " - " + ed.removed;
      if (!ed.added.empty()) diff += " + " + ed.added;
      const std::string msg = ed.verb + " " + ed.object + " in " + files[f];
      pairs.push_back({"toy" + std::to_string(pairs.size()), cmg::tokenize(diff), cmg::tokenize(msg)});
    }
  return pairs;
}

}  // namespace fixtures

#include <fstream>

#include <json.hpp>

namespace fixtures {

/// Writes raw commit records: the toy pairs as real diffs and subjects, plus
/// merges, subjects without a verb/object shape and one oversized diff.
inline void write_toy_corpus(const std::filesystem::path& path, std::size_t oversized_bytes = 5000) {
  std::ofstream out(path, std::ios::trunc);
  const auto emit = [&](const std::string& id, const std::string& diff, const std::string& msg) {
    out << nlohmann::json{{"id", id}, {"diff", diff}, {"message", msg}}.dump() << '\n';
  };
  const std::vector<std::string> files{"parser", "lexer", "cache", "router", "config", "logger", "socket", "buffer"};
  const std::vector<std::array<std::string, 3>> edits{
      {"+if (ptr == null) return;", "Fix null pointer check in ", "."},
      {"+log.debug(msg);", "Add debug logging in ", ""},
      {"-int unused_count = 0;", "Remove unused variable in ", ""},
      {"-timeout = 10;\n+timeout = 30;", "Increase default timeout in ", "\n\nLonger explanation. See #42."},
  };
  int n = 0;
  for (const auto& f : files)
    for (const auto& e : edits) {
      const std::string diff = "diff --git a/src/" + f + ".c b/src/" + f + ".c\nindex 7807cb6..ca7a229 100644\n@@ -1 +1 @@\n" + e[0] + "\n";
      emit("c" + std::to_string(n++), diff, e[1] + f + e[2]);
    }
  emit("m1", "diff --git a/x b/x\n+x\n", "Merge branch 'dev'");
  emit("m2", "diff --git a/y b/y\n+y\n", "Revert \"Add cache\"");
  emit("w1", "diff --git a/z b/z\n+z\n", "WIP");
  emit("w2", "diff --git a/q b/q\n+q\n", "typo");
  emit("big", "+" + std::string(oversized_bytes, 'x') + "\n", "Add huge file");
}

}  // namespace fixtures
