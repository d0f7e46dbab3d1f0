#include <doctest.h>

#include "cmg/vdo.hpp"
#include "test_util.hpp"
#include "vdo_fixture.hpp"

using namespace cmg;
using namespace cmg::vdo;

using vdofix::kFixture;

TEST_CASE("is_verb with suffix rules") {
  const auto lex = VerbLexicon::builtin();
  CHECK(is_verb("adds", lex));
  CHECK(is_verb("Fixed", lex));
  CHECK(is_verb("FIXES", lex));
  CHECK(is_verb("copies", lex));
  CHECK(is_verb("improved", lex));
  CHECK(is_verb("handling", lex));
  CHECK(is_verb("adding", lex));
  CHECK_FALSE(is_verb("9", lex));
  CHECK_FALSE(is_verb("7807cb6", lex));
  CHECK_FALSE(is_verb("merge", lex));
  CHECK_FALSE(is_verb("reverted", lex));
  CHECK_FALSE(is_verb("s", lex));
  CHECK_FALSE(is_verb("", lex));
}

TEST_CASE("lexicon invariants") {
  const auto lex = VerbLexicon::builtin();
  CHECK(lex.base_verbs.size() > 100);
  for (const auto& v : lex.base_verbs) {
    CHECK_FALSE(v.empty());
    for (char c : v) CHECK_FALSE(std::isupper(static_cast<unsigned char>(c)));
  }
  CHECK(lex.suffix_rules.front().suffix == "ies");
}

TEST_CASE("labelled subject fixture") {
  const auto lex = VerbLexicon::builtin();
  std::size_t agree = 0;
  for (const auto& [subject, label] : kFixture) {
    CAPTURE(subject);
    const bool got = is_vdo(tokenize(subject), lex);
    CHECK(got == label);
    agree += got == label;
  }
  CHECK(std::size(kFixture) == 40);
  CHECK(agree == std::size(kFixture));
  CHECK_FALSE(is_vdo({}, lex));
}

TEST_CASE("filter_corpus counts") {
  const auto lex = VerbLexicon::builtin();
  const auto pair = [](const char* id, const char* msg) { return PreparedPair{id, {"x"}, tokenize(msg)}; };
  const std::vector<PreparedPair> mixed{pair("a", "adds support for 9 inch tablet screens"), pair("b", "7807cb6 ca7a229")};
  auto [kept, rep] = filter_corpus(mixed, lex);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].id == "a");
  CHECK(rep.kept == 1);
  CHECK(rep.removed == 1);
  CHECK(rep.kept_ratio == 0.5);

  auto [all, all_rep] = filter_corpus({mixed[0], mixed[0]}, lex);
  CHECK(all_rep.kept_ratio == 1.0);

  auto [none, empty_rep] = filter_corpus({}, lex);
  CHECK(none.empty());
  CHECK(empty_rep.kept == 0);
  CHECK(empty_rep.removed == 0);
  CHECK(empty_rep.kept_ratio == 0.0);
}

TEST_CASE("lexicon file") {
  testutil::TempDir dir("lex");
  testutil::write_file(dir / "verbs.txt", "# custom\nFrobnicate\n\n  tweak  # inline\n");
  const auto lex = VerbLexicon::load(dir / "verbs.txt");
  CHECK(lex.base_verbs == std::set<std::string>{"frobnicate", "tweak"});
  CHECK(is_vdo(tokenize("frobnicates the widget"), lex));
  CHECK_FALSE(is_vdo(tokenize("fix the widget"), lex));
  CHECK_THROWS_AS(VerbLexicon::load(dir / "missing.txt"), CorpusError);
}
