#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "bleu_oracle.hpp"
#include "cmg/bleu.hpp"
#include "cmg/rng.hpp"

using namespace cmg;
using namespace cmg::bleu;

namespace {

TokenSequence random_tokens(Rng& rng, std::size_t max_len, int vocab) {
  TokenSequence t(rng.uniform_index(max_len + 1));
  for (auto& s : t) s = "w" + std::to_string(rng.uniform_index(static_cast<std::uint64_t>(vocab)));
  return t;
}

std::vector<std::pair<TokenSequence, TokenSequence>> as_oracle(const std::vector<Pair>& pairs) {
  std::vector<std::pair<TokenSequence, TokenSequence>> out;
  for (const auto& p : pairs) out.emplace_back(p.generated, p.reference);
  return out;
}

TokenSequence split(const std::string& s) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto j = s.find(' ', i);
    const auto end = j == std::string::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("clipped counts on a classic example") {
  // "the" appears seven times in the candidate but only twice in the reference.
  const std::vector<Pair> pairs{{split("the the the the the the the"), split("the cat is on the mat")}};
  const auto [m, t] = ngram_counts(1, pairs);
  CHECK(m == 2);
  CHECK(t == 7);
  CHECK(modified_precision(1, pairs) == doctest::Approx(2.0 / 7.0));
  CHECK(modified_precision(2, pairs) == 0.0);
  CHECK_THROWS_AS(ngram_counts(0, pairs), std::invalid_argument);
}

TEST_CASE("brevity penalty cases") {
  CHECK(brevity_penalty(10, 5) == 1.0);
  CHECK(brevity_penalty(5, 5) == 1.0);
  CHECK(brevity_penalty(5, 10) == doctest::Approx(std::exp(-1.0)));
  CHECK(brevity_penalty(0, 3) == 0.0);
  CHECK(brevity_penalty(0, 0) == 1.0);
}

TEST_CASE("corpus BLEU agrees with brute-force recount") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Pair> pairs(1 + rng.uniform_index(10));
    const int vocab = 1 + static_cast<int>(rng.uniform_index(8));
    for (auto& p : pairs) {
      p.generated = random_tokens(rng, 12, vocab);
      p.reference = random_tokens(rng, 12, vocab);
    }
    for (bool smooth : {false, true}) {
      const auto got = corpus_bleu(pairs, 4, smooth ? Smoothing::AddOneCounts : Smoothing::None);
      const auto want = oracle::bleu(as_oracle(pairs), smooth);
      CHECK(std::abs(got.bleu - want.bleu) < 1e-9);
      CHECK(std::abs(got.bp - want.bp) < 1e-12);
      for (std::size_t n = 0; n < 4; ++n) CHECK(std::abs(got.precisions[n] - want.p[n]) < 1e-12);
      CHECK(got.bleu >= 0.0);
      CHECK(got.bleu <= 100.0 + 1e-9);
    }
  }
}

TEST_CASE("identical corpora score 100") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Pair> pairs(1 + rng.uniform_index(10));
    for (auto& p : pairs) {
      p.generated = random_tokens(rng, 12, 6);
      while (p.generated.size() < 4) p.generated.push_back("pad");
      p.reference = p.generated;
    }
    const auto r = corpus_bleu(pairs);
    CHECK(r.bleu == 100.0);
    CHECK(r.bp == 1.0);
  }
}

TEST_CASE("report fields and invariants") {
  const std::vector<Pair> pairs{{split("fix the bug in parser"), split("fix a bug in the parser")},
                                {split("add tests"), split("add unit tests")}};
  const auto r = corpus_bleu(pairs);
  CHECK(r.len_gen == 7);
  CHECK(r.len_ref == 9);
  CHECK(r.bp == doctest::Approx(std::exp(1.0 - 9.0 / 7.0)));
  CHECK(r.matches.size() == 4);
  CHECK(r.totals == std::vector<std::size_t>{7, 5, 3, 2});
  CHECK(r.matches[0] == 7);
  // No 4-gram matches: unsmoothed BLEU is zero.
  CHECK(r.matches[3] == 0);
  CHECK(r.bleu == 0.0);
  const auto s = corpus_bleu(pairs, 4, Smoothing::AddOneCounts);
  CHECK(s.bleu > 0.0);
  CHECK(s.smoothed);

  // Adding a perfectly matched pair never lowers BLEU when the rest is imperfect.
  auto more = pairs;
  more.push_back({split("update the docs now"), split("update the docs now")});
  CHECK(corpus_bleu(more, 4, Smoothing::AddOneCounts).bleu >= s.bleu);

  CHECK_THROWS_AS(corpus_bleu({}), std::invalid_argument);
  CHECK_THROWS_AS(corpus_bleu(pairs, 0), std::invalid_argument);
}

TEST_CASE("empty generations") {
  const std::vector<Pair> pairs{{{}, split("a b c")}};
  const auto r = corpus_bleu(pairs);
  CHECK(r.bleu == 0.0);
  CHECK(r.bp == 0.0);
  CHECK(r.precisions == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("bucketed BLEU partitions by source length") {
  std::vector<Pair> pairs;
  std::vector<std::size_t> lengths{3, 25, 26, 50, 51, 75, 76, 400};
  for (std::size_t i = 0; i < lengths.size(); ++i)
    pairs.push_back({split("a b c d e"), i % 2 ? split("a b c d e") : split("a b x d e")});
  const auto buckets = bucketed_bleu(pairs, lengths);
  REQUIRE(buckets.size() == 4);
  CHECK(buckets[0].label == "<=25");
  CHECK(buckets[1].label == ">25,<=50");
  CHECK(buckets[2].label == ">50,<=75");
  CHECK(buckets[3].label == ">75");
  std::size_t total = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(buckets[b].count == 2);
    total += buckets[b].count;
    REQUIRE(buckets[b].report.has_value());
    const std::vector<Pair> members{pairs[2 * b], pairs[2 * b + 1]};
    CHECK(buckets[b].report->bleu == corpus_bleu(members).bleu);
  }
  CHECK(total == pairs.size());

  const auto sparse = bucketed_bleu({pairs[0]}, {3});
  CHECK(sparse[0].count == 1);
  CHECK_FALSE(sparse[1].report.has_value());
  CHECK_THROWS_AS(bucketed_bleu(pairs, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(bucketed_bleu(pairs, lengths, {50, 25}), std::invalid_argument);
}

TEST_CASE("retrieval baseline picks the most similar training diff") {
  const std::vector<PreparedPair> train{
      {"a", split("x y z"), split("msg a")},
      {"b", split("p q r r"), split("msg b")},
      {"c", split("p q r"), split("msg c")},
  };
  const auto out = retrieval_baseline(train, {split("r r q p"), split("z y"), split("nothing shared")});
  REQUIRE(out.size() == 3);
  CHECK(out[0] == split("msg b"));
  CHECK(out[1] == split("msg a"));
  // No overlap anywhere: the first training message.
  CHECK(out[2] == split("msg a"));
  CHECK_THROWS_AS(retrieval_baseline({}, {split("a")}), std::invalid_argument);
}

TEST_CASE("table formatting") {
  CHECK(format_header() == "model\tBLEU\tLen_Gen\tLen_Ref\tp1\tp2\tp3\tp4");
  const std::vector<Pair> same{{split("a b c d"), split("a b c d")}};
  CHECK(format_row("nmt", corpus_bleu(same)) == "nmt\t100.00\t4\t4\t100.0\t100.0\t100.0\t100.0");
}
