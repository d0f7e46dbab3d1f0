#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "cmg/corpus.hpp"

namespace cmg::qa {

class QaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Label { NotBad, Bad };

inline constexpr int kMaxScore = 7;

/// Median of the scores rounded down. Scores must be non-empty, each in [0, 7].
int median_score(const std::vector<int>& scores);

/// Bad iff the rounded-down median is 0 or 1.
Label label_for(int median);

struct GoldRecord {
  std::string id;
  TokenSequence diff;
  std::vector<int> scores;
  int median_score = 0;
  Label label = Label::NotBad;

  static GoldRecord make(std::string id, TokenSequence diff, std::vector<int> scores);
};

/// Line-delimited JSON with fields id, diff (raw text) and scores (1 to 3
/// integers in [0, 7]). The diff is preprocessed like a model source.
std::vector<GoldRecord> load_gold(const std::filesystem::path& path);

using FeatureVector = Eigen::SparseVector<double>;

struct IdfTable {
  std::map<std::string, int> feature_index;
  Eigen::VectorXd idf;

  int size() const { return static_cast<int>(idf.size()); }
};

/// idf(t) = ln((1 + D) / (1 + df(t))) + 1 over every distinct token.
IdfTable compute_idf(const std::vector<TokenSequence>& diffs);

/// Raw counts times idf, L2-normalized. Unknown tokens are ignored.
FeatureVector tfidf(const TokenSequence& diff, const IdfTable& table);

struct SvmHyper {
  double lambda = 1e-4;
  int epochs = 20;
  std::uint64_t seed = 1;

  bool operator==(const SvmHyper&) const = default;
};

struct QaModel {
  IdfTable table;
  Eigen::VectorXd weights;
  double bias = 0.0;
  SvmHyper hyper;

  void save(const std::filesystem::path& path) const;
  static QaModel load(const std::filesystem::path& path);
};

/// Per-example SGD on (lambda/2)|w|^2 + mean hinge loss, step 1/(lambda t),
/// with a seeded shuffle every epoch. y = +1 for bad, -1 for not bad.
QaModel train_svm(const std::vector<GoldRecord>& gold, const SvmHyper& hyper);

struct Prediction {
  Label label = Label::NotBad;
  double margin = 0.0;
};

/// Bad iff w.x + b > 0; a zero margin is not bad.
Prediction predict(const TokenSequence& diff, const QaModel& model);

struct CrossValidation {
  std::vector<Prediction> predictions;  // aligned with the gold records
  std::vector<int> fold_of;             // fold index per gold record
  std::size_t true_pos = 0, false_pos = 0, false_neg = 0, true_neg = 0;
  double precision = 0.0;               // 0 when nothing is predicted bad
  double recall = 0.0;                  // 0 when no record is bad
};

/// Fold sizes for n records in k near-equal contiguous folds.
std::vector<std::size_t> fold_sizes(std::size_t n, std::size_t k);

/// Seeded shuffle, k contiguous folds; each fold is predicted by a model
/// trained on the other k - 1.
CrossValidation cross_validate(const std::vector<GoldRecord>& gold, std::size_t k, const SvmHyper& hyper,
                               std::uint64_t seed);

struct ReductionReport {
  std::array<std::size_t, kMaxScore + 1> count{};
  std::array<std::size_t, kMaxScore + 1> removed{};
  std::array<double, kMaxScore + 1> fraction_removed{};  // 0 where count is 0
  double bad_reduction = 0.0;  // share of score <= 1 records predicted bad
  double good_cost = 0.0;      // share of score >= 6 records predicted bad
};

ReductionReport reduction_report(const std::vector<int>& median_scores, const std::vector<Label>& predicted);

}  // namespace cmg::qa
