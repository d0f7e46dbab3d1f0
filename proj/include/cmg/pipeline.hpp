#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmg/corpus.hpp"
#include "cmg/nmt/train.hpp"
#include "cmg/qa.hpp"

namespace cmg {

/// Everything a pipeline run needs. Serialized as JSON; missing keys take
/// their defaults.
struct PipelineConfig {
  std::string corpus_path;      // line-delimited commit records
  std::string git_repo;         // used when corpus_path is empty
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string qa_model_path = "qa_model.json";
  std::string gold_path;
  std::string qa_predictions_path = "qa_predictions.jsonl";
  std::string lexicon_path;     // empty selects the built-in verb list

  CorpusLimits limits;
  std::optional<std::size_t> source_vocab_cap = 50000;
  std::optional<std::size_t> target_vocab_cap;
  SplitSizes split;
  bool vdo = true;

  nmt::Hyperparams hyper;
  qa::SvmHyper svm;
  std::size_t qa_folds = 10;

  std::uint64_t seed = 1234;

  bool operator==(const PipelineConfig&) const = default;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

/// Counts after each preparation stage, in order.
struct PrepareReport {
  std::vector<std::pair<std::string, std::size_t>> stages;
  std::map<std::string, std::size_t> removed;  // filter reason -> count
  std::size_t vdo_removed = 0;
  std::size_t train = 0, valid = 0, test = 0;
  int source_vocab = 0, target_vocab = 0;

  nlohmann::json to_json() const;
};

/// ingest -> preprocess and filter -> optional V-DO filter -> split -> vocab.
/// Writes {train,valid,test}.{src,tgt,ids}, vocab.{src,tgt} and
/// prepare_report.json into data_dir.
PrepareReport cmd_prepare(const PipelineConfig& config);

/// Trains from the prepared splits; writes checkpoint files and appends to
/// train.log in checkpoint_dir. Returns the paths written.
std::vector<std::filesystem::path> cmd_train(const PipelineConfig& config, bool resume = false);

/// Checkpoint files in checkpoint_dir, oldest first.
std::vector<std::filesystem::path> list_checkpoints(const PipelineConfig& config);

inline constexpr const char* kQaWarning = "WARNING: unable to generate a reliable commit message for this diff.";

struct GenerateResult {
  bool warning = false;
  std::string text;  // message or the warning line
};

/// Decodes one raw diff with the last ensemble_size checkpoints. With the QA
/// gate enabled, a diff predicted bad yields the warning instead.
GenerateResult cmd_generate(const PipelineConfig& config, const std::string& diff_text, bool with_qa);

/// Corpus and length-bucketed BLEU of the ensemble on the test split plus the
/// retrieval baseline. smoke scores the references against themselves.
std::string cmd_evaluate(const PipelineConfig& config, bool smoke = false);

/// Trains on the whole gold set and writes qa_model_path.
qa::QaModel cmd_qa_train(const PipelineConfig& config);

/// Cross-validates on the gold set; writes per-record predictions to
/// qa_predictions_path and returns the summary text.
std::string cmd_qa_crossval(const PipelineConfig& config, qa::CrossValidation* out = nullptr);

/// Reduction report over the predictions written by cmd_qa_crossval.
std::string cmd_qa_report(const PipelineConfig& config, qa::ReductionReport* out = nullptr);

}  // namespace cmg
