#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cmg/corpus.hpp"
#include "cmg/nmt/adadelta.hpp"
#include "cmg/nmt/beam.hpp"
#include "cmg/nmt/model.hpp"

namespace cmg::nmt {

using Params = ModelParams<double>;

/// Training and decoding configuration. Defaults are desk-scale; the
/// published configuration is embed 512, hidden 1024, minibatch 80.
struct Hyperparams {
  int embed_dim = 64;
  int hidden_dim = 128;
  int minibatch_size = 16;
  std::size_t max_source_len = 100;
  std::size_t max_target_len = 30;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  double init_scale = 0.08;
  std::uint64_t validate_every = 100;     // minibatches; 0 disables
  std::uint64_t checkpoint_every = 300;   // minibatches; 0 keeps only the final one
  std::uint64_t max_epochs = 5000;
  std::uint64_t max_minibatches = 10'000'000;
  std::uint64_t patience = 10;            // validations without improvement
  int ensemble_size = 4;
  int beam_width = 5;
  std::uint64_t seed = 1234;

  /// Throws ModelError if any field is out of range.
  void validate() const;

  bool operator==(const Hyperparams&) const = default;
};

struct Checkpoint {
  Params params;
  AdadeltaState<double> optimizer;
  std::uint64_t minibatch_index = 0;
  std::optional<double> validation_bleu;
  std::uint64_t seed = 0;
  std::uint64_t source_vocab_fingerprint = 0;
  std::uint64_t target_vocab_fingerprint = 0;
  // Early-stopping bookkeeping, restored on resume.
  double best_bleu = 0.0;
  std::uint64_t bad_validations = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws ModelError on a bad magic, version mismatch, truncation or
/// checksum failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, additionally requiring the given vocabulary sizes.
Checkpoint load_checkpoint(const std::filesystem::path& path, int source_vocab, int target_vocab);

/// Vocabulary ids with EOS appended; the token sequence is truncated to
/// max_len first.
std::vector<int> encode_sequence(const Vocabulary& vocab, const TokenSequence& tokens, std::size_t max_len);

struct TrainOptions {
  std::optional<Checkpoint> resume;
  /// One line per validation event.
  std::ostream* log = nullptr;
  /// Called for every checkpoint as soon as it is taken.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

/// Minibatch Adadelta over the training split. Validates with greedy-decode
/// corpus BLEU on the validation split, checkpoints periodically and once at
/// the end, and stops at the configured limits or after `patience`
/// validations without improvement. Returns the checkpoints in order.
std::vector<Checkpoint> train(const DatasetSplit& split, const Vocabulary& source_vocab,
                              const Vocabulary& target_vocab, const Hyperparams& hyper,
                              const TrainOptions& options = {});

/// Beam search over the mean distribution of the given checkpoints. Throws
/// ModelError when the checkpoints disagree on vocabularies or dimensions.
TokenSequence ensemble_decode(const std::vector<const Checkpoint*>& checkpoints, const Vocabulary& source_vocab,
                              const Vocabulary& target_vocab, const TokenSequence& source, std::size_t beam_width,
                              const Hyperparams& hyper);

/// Corpus BLEU of greedy single-model decodes against the pairs' targets.
double greedy_bleu(const Params& params, const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                   const std::vector<PreparedPair>& pairs, const Hyperparams& hyper);

}  // namespace cmg::nmt
