// Command-line front end for the commit message generation pipeline.
//
//   cmg [--config cfg.json] [--seed N] [--vdo on|off] prepare
//   cmg train [--resume]
//   cmg generate [--with-qa] [--diff FILE]      (diff read from stdin otherwise)
//   cmg evaluate [--smoke] [--out FILE]
//   cmg qa train|crossval|report
//
// Exit status: 0 success, 2 QA warning emitted instead of a message, 1 error.

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "cmg/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarning = 2;

std::string read_all(std::istream& in) { return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Commit message generation from diffs"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string vdo_flag;
  bool with_qa = false;
  std::string data_dir, checkpoint_dir;
  app.add_option("--config", config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for splitting, training and the QA filter");
  app.add_option("--vdo", vdo_flag, "Verb/direct-object filter during prepare")->check(CLI::IsMember({"on", "off"}));
  app.add_flag("--with-qa", with_qa, "Gate generation with the QA filter");
  app.add_option("--data-dir", data_dir, "Prepared splits and vocabularies");
  app.add_option("--checkpoint-dir", checkpoint_dir, "Checkpoint directory");

  auto* prepare = app.add_subcommand("prepare", "Ingest, filter, split and build vocabularies");
  std::string corpus, git_repo, lexicon;
  prepare->add_option("--corpus", corpus, "Line-delimited commit records (id, diff, message)");
  prepare->add_option("--git", git_repo, "Local git repository to ingest");
  prepare->add_option("--lexicon", lexicon, "Verb lexicon override (one verb per line)");

  auto* train = app.add_subcommand("train", "Train the encoder-decoder on the prepared splits");
  bool resume = false;
  train->add_flag("--resume", resume, "Continue from the latest checkpoint");

  auto* generate = app.add_subcommand("generate", "Generate a commit message for one diff");
  std::string diff_path;
  generate->add_option("--diff", diff_path, "Diff file ('-' or omitted reads stdin)");
  generate->add_flag("--with-qa", with_qa, "Gate generation with the QA filter");

  auto* evaluate = app.add_subcommand("evaluate", "BLEU report on the test split");
  bool smoke = false;
  std::string report_path;
  evaluate->add_flag("--smoke", smoke, "Score references against themselves");
  evaluate->add_option("--out", report_path, "Also write the report to this file");

  auto* qa = app.add_subcommand("qa", "Quality-assurance filter");
  qa->require_subcommand(1);
  std::string gold, qa_model, predictions;
  qa->add_option("--gold", gold, "Gold set (id, diff, scores)");
  qa->add_option("--model", qa_model, "QA model file");
  qa->add_option("--predictions", predictions, "Cross-validation predictions file");
  auto* qa_train = qa->add_subcommand("train", "Train the QA classifier on the whole gold set");
  auto* qa_crossval = qa->add_subcommand("crossval", "k-fold cross-validation precision/recall");
  auto* qa_report = qa->add_subcommand("report", "Removal fractions per score from the predictions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    cmg::PipelineConfig config;
    if (!config_path.empty()) config = cmg::load_config(config_path);
    if (seed) config.seed = *seed;
    if (!vdo_flag.empty()) config.vdo = vdo_flag == "on";
    if (!data_dir.empty()) config.data_dir = data_dir;
    if (!checkpoint_dir.empty()) config.checkpoint_dir = checkpoint_dir;
    if (!corpus.empty()) config.corpus_path = corpus;
    if (!git_repo.empty()) {
      config.git_repo = git_repo;
      if (corpus.empty()) config.corpus_path.clear();
    }
    if (!lexicon.empty()) config.lexicon_path = lexicon;
    if (!gold.empty()) config.gold_path = gold;
    if (!qa_model.empty()) config.qa_model_path = qa_model;
    if (!predictions.empty()) config.qa_predictions_path = predictions;

    if (*prepare) {
      const auto rep = cmg::cmd_prepare(config);
      std::cout << rep.to_json().dump(2) << '\n';
    } else if (*train) {
      const auto written = cmg::cmd_train(config, resume);
      for (const auto& p : written) std::cout << p.string() << '\n';
    } else if (*generate) {
      std::string diff;
      if (diff_path.empty() || diff_path == "-") {
        diff = read_all(std::cin);
      } else {
        std::ifstream in(diff_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open diff " + diff_path);
        diff = read_all(in);
      }
      const auto result = cmg::cmd_generate(config, diff, with_qa);
      std::cout << result.text << '\n';
      return result.warning ? kExitWarning : kExitOk;
    } else if (*evaluate) {
      const auto report = cmg::cmd_evaluate(config, smoke);
      std::cout << report;
      if (!report_path.empty()) std::ofstream(report_path, std::ios::trunc) << report;
    } else if (*qa_train) {
      const auto model = cmg::cmd_qa_train(config);
      std::cout << "wrote " << config.qa_model_path << " (" << model.table.size() << " features)\n";
    } else if (*qa_crossval) {
      std::cout << cmg::cmd_qa_crossval(config);
    } else if (*qa_report) {
      std::cout << cmg::cmd_qa_report(config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}
