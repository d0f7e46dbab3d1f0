#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmg/corpus.hpp"

namespace cmg::bleu {

/// A generated message and its single reference.
struct Pair {
  TokenSequence generated;
  TokenSequence reference;
};

enum class Smoothing { None, AddOneCounts };

struct BleuReport {
  double bleu = 0.0;                   // percent, [0, 100]
  std::vector<double> precisions;      // p_1..p_N as fractions in [0, 1]
  std::vector<std::size_t> matches;    // clipped n-gram counts per order
  std::vector<std::size_t> totals;     // generated n-gram counts per order
  std::size_t len_gen = 0;
  std::size_t len_ref = 0;
  double bp = 1.0;
  bool smoothed = false;
};

/// Clipped matches and generated n-gram total of order n summed over pairs.
std::pair<std::size_t, std::size_t> ngram_counts(std::size_t n, const std::vector<Pair>& pairs);

/// Modified n-gram precision; 0 when no generated n-grams exist.
double modified_precision(std::size_t n, const std::vector<Pair>& pairs);

/// 1 if c > r, exp(1 - r/c) if 0 < c <= r, 0 if c == 0 < r, 1 if c == r == 0.
double brevity_penalty(std::size_t c, std::size_t r);

/// Throws std::invalid_argument on an empty corpus or N == 0.
BleuReport corpus_bleu(const std::vector<Pair>& pairs, std::size_t max_order = 4,
                       Smoothing smoothing = Smoothing::None);

struct Bucket {
  std::string label;
  std::size_t count = 0;
  std::optional<BleuReport> report;  // absent for empty buckets
};

/// Partitions pairs by source length into (<= b0], (b0, b1], ..., (> b_last]
/// and scores each bucket independently.
std::vector<Bucket> bucketed_bleu(const std::vector<Pair>& pairs, const std::vector<std::size_t>& source_lengths,
                                  const std::vector<std::size_t>& boundaries = {25, 50, 75});

/// For each test source, the training message whose diff has the highest
/// cosine similarity of unigram counts. Ties go to the lower training index.
std::vector<TokenSequence> retrieval_baseline(const std::vector<PreparedPair>& train,
                                              const std::vector<TokenSequence>& test_sources);

/// One row of the evaluation table: model BLEU Len_Gen Len_Ref p1..p4.
std::string format_row(const std::string& name, const BleuReport& report);
std::string format_header(std::size_t max_order = 4);

}  // namespace cmg::bleu
