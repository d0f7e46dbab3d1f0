#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

/// Raised for malformed corpus input and precondition violations in the
/// data pipeline.
class CorpusError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Commit {
  std::string id;
  std::string diff_text;
  std::string message_text;
  std::size_t byte_size = 0;
};

using TokenSequence = std::vector<std::string>;

/// Literal token substituted for issue and commit ids.
inline constexpr std::string_view kIdPlaceholder = "<id>";

/// Reads line-delimited JSON records with string fields "id", "diff" and
/// "message". Blank lines are skipped.
std::vector<Commit> ingest_jsonl(const std::filesystem::path& path);

struct GitIngestReport {
  std::size_t revisions = 0;  // revisions listed by the repository
  std::size_t skipped = 0;    // revisions whose objects could not be read
  std::vector<std::string> warnings;
};

/// One Commit per revision that has a parent, diffed against its first
/// parent, oldest first. Requires the `git` executable on PATH.
std::vector<Commit> ingest_git(const std::filesystem::path& repo,
                               GitIngestReport* report = nullptr);

std::string extract_first_sentence(std::string_view message);

enum class IdKind { Source, Target };

/// Target: "#" followed by digits. Source: standalone hexadecimal words of
/// length >= 7 that contain at least one digit.
std::string strip_ids(std::string_view text, IdKind kind);

bool is_merge_or_rollback(std::string_view message);

/// Splits on whitespace; every ASCII punctuation character other than '_'
/// becomes its own token. The id placeholder is kept whole.
TokenSequence tokenize(std::string_view text);

std::string join_tokens(const TokenSequence& tokens);

struct CorpusLimits {
  std::size_t max_source_len = 100;
  std::size_t max_target_len = 30;
  std::size_t max_diff_bytes = 1u << 20;

  bool operator==(const CorpusLimits&) const = default;
};

/// A preprocessed commit: tokenized diff and first-sentence message.
struct PreparedPair {
  std::string id;
  TokenSequence source;
  TokenSequence target;
};

namespace removal {
inline constexpr const char* kMergeOrRollback = "merge_or_rollback";
inline constexpr const char* kDiffTooLarge = "diff_too_large";
inline constexpr const char* kEmptyTarget = "empty_target";
inline constexpr const char* kSourceTooLong = "source_too_long";
inline constexpr const char* kTargetTooLong = "target_too_long";
}  // namespace removal

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> removed;  // reason -> count

  std::size_t total_removed() const;
};

/// Preprocesses one commit: first sentence, id stripping, tokenization.
PreparedPair preprocess(const Commit& commit);

/// Tokens of a raw diff as fed to the model and the QA filter.
TokenSequence preprocess_diff(std::string_view diff_text);

struct FilterResult {
  std::vector<PreparedPair> kept;
  FilterReport report;
};

FilterResult apply_filters(const std::vector<Commit>& commits, const CorpusLimits& limits);

/// Bidirectional token/index mapping. Indices 0..3 are PAD, UNK, START, EOS.
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  /// Corpus tokens in id order; specials are added in front.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

  std::vector<int> encode(const TokenSequence& tokens) const;
  TokenSequence decode(const std::vector<int>& ids) const;

  /// Corpus tokens only (no specials), in id order.
  std::vector<std::string> corpus_tokens() const;

  /// 64-bit FNV-1a over all tokens; used to detect mismatched models.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  static const std::vector<std::string>& special_tokens();

private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Most frequent tokens first, ties broken lexicographically. cap must be >= 1
/// when given.
Vocabulary build_vocab(const std::vector<TokenSequence>& sequences, std::optional<std::size_t> cap);

struct SplitSizes {
  /// Absolute counts. When unset the fractions are used.
  std::optional<std::size_t> test_count, valid_count;
  double test_fraction = 0.1;
  double valid_fraction = 0.1;

  bool operator==(const SplitSizes&) const = default;
};

struct DatasetSplit {
  std::vector<PreparedPair> train, valid, test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle followed by contiguous slicing: test, then valid, then the
/// remainder as train.
DatasetSplit split_dataset(std::vector<PreparedPair> pairs, const SplitSizes& sizes, std::uint64_t seed);

/// Writes one space-joined sequence per line.
void write_sequences(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs);
std::vector<TokenSequence> read_sequences(const std::filesystem::path& path);

}  // namespace cmg
