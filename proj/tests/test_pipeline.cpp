#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cmg/pipeline.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace cmg;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;
namespace fs = std::filesystem;

namespace {

PipelineConfig toy_config(const TempDir& dir) {
  PipelineConfig c;
  c.corpus_path = (dir / "corpus.jsonl").string();
  c.data_dir = (dir / "data").string();
  c.checkpoint_dir = (dir / "ckpt").string();
  c.qa_model_path = (dir / "qa.json").string();
  c.qa_predictions_path = (dir / "preds.jsonl").string();
  c.limits.max_diff_bytes = 4096;
  c.split.test_count = 4;
  c.split.valid_count = 4;
  c.hyper.embed_dim = 8;
  c.hyper.hidden_dim = 8;
  c.hyper.minibatch_size = 4;
  c.hyper.max_minibatches = 12;
  c.hyper.validate_every = 4;
  c.hyper.checkpoint_every = 4;
  c.hyper.ensemble_size = 2;
  c.hyper.beam_width = 2;
  c.seed = 5;
  fixtures::write_toy_corpus(dir / "corpus.jsonl");
  return c;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Runs the command line tool; returns (exit status, stdout).
std::pair<int, std::string> run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "cli_stdout.txt";
  const std::string cmd = std::string(CMG_CLI_PATH) + " " + args + " > '" + out.string() + "' 2>/dev/null";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_file(out)};
}

void write_bad_qa_model(const fs::path& path) {
  qa::QaModel m;
  m.table = qa::compute_idf({{"x"}});
  m.weights = Eigen::VectorXd::Zero(1);
  m.bias = 1.0;
  m.save(path);
}

}  // namespace

TEST_CASE("config round trip") {
  TempDir dir("cfg");
  PipelineConfig c;
  c.corpus_path = "in.jsonl";
  c.limits.max_target_len = 12;
  c.source_vocab_cap = std::nullopt;
  c.target_vocab_cap = 77;
  c.split.test_count = 3;
  c.split.valid_fraction = 0.25;
  c.vdo = false;
  c.hyper.hidden_dim = 33;
  c.hyper.adadelta_eps = 1e-7;
  c.hyper.patience = 4;
  c.svm.lambda = 0.01;
  c.qa_folds = 5;
  c.seed = 99;
  save_config(c, dir / "c.json");
  CHECK(load_config(dir / "c.json") == c);

  write_file(dir / "partial.json", R"({"seed": 3, "hyper": {"beam_width": 1}})");
  const auto p = load_config(dir / "partial.json");
  PipelineConfig expected;
  expected.seed = 3;
  expected.hyper.beam_width = 1;
  CHECK(p == expected);

  write_file(dir / "bad.json", "{");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), CorpusError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), CorpusError);
}

TEST_CASE("prepare") {
  TempDir dir("prep");
  auto c = toy_config(dir);
  const auto rep = cmd_prepare(c);
  REQUIRE(rep.stages.size() == 3);
  CHECK(rep.stages[0] == std::pair<std::string, std::size_t>{"ingested", 37});
  CHECK(rep.removed.at(removal::kMergeOrRollback) == 2);
  CHECK(rep.removed.at(removal::kDiffTooLarge) == 1);
  CHECK(rep.stages[1].second == 34);
  CHECK(rep.vdo_removed == 2);
  CHECK(rep.stages[2].second == 32);
  CHECK(rep.train + rep.valid + rep.test == 32);
  CHECK(rep.test == 4);
  CHECK(rep.valid == 4);

  const fs::path data = c.data_dir;
  for (const char* f : {"train.src", "train.tgt", "train.ids", "valid.src", "test.tgt", "vocab.src", "vocab.tgt",
                        "prepare_report.json"})
    CHECK(fs::exists(data / f));
  CHECK(count_lines(read_file(data / "train.src")) == rep.train);
  CHECK(count_lines(read_file(data / "vocab.tgt")) + Vocabulary::kNumSpecials == static_cast<std::size_t>(rep.target_vocab));
  // Ids are stripped and punctuation split in the written sources.
  CHECK(read_file(data / "train.src").find("7807cb6") == std::string::npos);
  CHECK(read_file(data / "train.src").find("<id> . . <id>") != std::string::npos);

  SUBCASE("same seed, same bytes") {
    auto again = c;
    again.data_dir = (dir / "data2").string();
    cmd_prepare(again);
    for (const auto& e : fs::directory_iterator(data))
      CHECK(read_file(e.path()) == read_file(fs::path(again.data_dir) / e.path().filename()));
  }
  SUBCASE("vdo filter only removes") {
    auto off = c;
    off.vdo = false;
    off.data_dir = (dir / "data_off").string();
    const auto r = cmd_prepare(off);
    CHECK(r.stages.size() == 2);
    CHECK(r.train + r.valid + r.test >= rep.train + rep.valid + rep.test);
  }
  SUBCASE("every diff too large") {
    auto tiny = c;
    tiny.limits.max_diff_bytes = 8;
    CHECK_THROWS_WITH_AS(cmd_prepare(tiny), doctest::Contains("diff_too_large"), CorpusError);
  }
  SUBCASE("no input") {
    auto none = c;
    none.corpus_path.clear();
    CHECK_THROWS_AS(cmd_prepare(none), CorpusError);
  }
}

TEST_CASE("train, generate and evaluate") {
  TempDir dir("run");
  auto c = toy_config(dir);

  CHECK_THROWS_AS(cmd_train(c), CorpusError);  // nothing prepared yet
  cmd_prepare(c);

  auto zero = c;
  zero.hyper.max_minibatches = 0;
  CHECK_THROWS_AS(cmd_train(zero), nmt::ModelError);

  const auto written = cmd_train(c);
  REQUIRE(written.size() == 3);
  CHECK(written.back().filename() == "model.000000000012.ckpt");
  CHECK(list_checkpoints(c) == written);
  const auto log = read_file(fs::path(c.checkpoint_dir) / "train.log");
  CHECK(count_lines(log) == 3);

  SUBCASE("resume continues at the recorded index") {
    auto more = c;
    more.hyper.max_minibatches = 16;
    const auto extra = cmd_train(more, true);
    REQUIRE(extra.size() == 1);
    CHECK(extra[0].filename() == "model.000000000016.ckpt");
    CHECK(nmt::load_checkpoint(extra[0]).minibatch_index == 16);
    CHECK(count_lines(read_file(fs::path(c.checkpoint_dir) / "train.log")) == 4);
    // A fresh run replaces the earlier checkpoints.
    CHECK(cmd_train(c).size() == 3);
    CHECK(list_checkpoints(c).size() == 3);
  }
  SUBCASE("generate") {
    const std::string diff = "diff --git a/src/cache.c b/src/cache.c\n+log.debug(msg);\n";
    const auto plain = cmd_generate(c, diff, false);
    CHECK_FALSE(plain.warning);
    CHECK(plain.text != kQaWarning);
    CHECK(cmd_generate(c, diff, false).text == plain.text);

    write_bad_qa_model(c.qa_model_path);
    const auto gated = cmd_generate(c, diff, true);
    CHECK(gated.warning);
    CHECK(gated.text == kQaWarning);

    auto missing = c;
    missing.qa_model_path = (dir / "none.json").string();
    CHECK_THROWS_AS(cmd_generate(missing, diff, true), qa::QaError);
    missing.checkpoint_dir = (dir / "empty").string();
    CHECK_THROWS_AS(cmd_generate(missing, diff, false), nmt::ModelError);
  }
  SUBCASE("evaluate") {
    const auto smoke = cmd_evaluate(c, true);
    CHECK(smoke.find("reference\t100.00\t") != std::string::npos);
    const auto report = cmd_evaluate(c, false);
    CHECK(report == cmd_evaluate(c, false));

    // Rows share the reference length; bucket counts add up to the test size.
    std::istringstream lines(report);
    std::string line;
    std::vector<std::string> len_ref;
    std::size_t bucket_total = 0;
    bool in_buckets = false;
    while (std::getline(lines, line)) {
      if (line.rfind("bucket\t", 0) == 0) {
        in_buckets = true;
        continue;
      }
      std::vector<std::string> cells;
      std::istringstream row(line);
      for (std::string cell; std::getline(row, cell, '\t');) cells.push_back(cell);
      if (!in_buckets && cells.size() >= 4 && (cells[0] == "retrieval" || cells[0] == "nmt")) len_ref.push_back(cells[3]);
      if (in_buckets && cells.size() >= 2) bucket_total += std::stoul(cells[1]);
    }
    REQUIRE(len_ref.size() == 2);
    CHECK(len_ref[0] == len_ref[1]);
    CHECK(bucket_total == 4);
  }
}

TEST_CASE("qa subcommands") {
  TempDir dir("qa");
  PipelineConfig c;
  c.gold_path = (dir / "gold.jsonl").string();
  c.qa_model_path = (dir / "qa.json").string();
  c.qa_predictions_path = (dir / "preds.jsonl").string();
  c.qa_folds = 5;

  {
    std::ofstream out(c.gold_path);
    for (int i = 0; i < 30; ++i) {
      const bool bad = i % 3 == 0;
      out << nlohmann::json{{"id", "g" + std::to_string(i)},
                            {"diff", bad ? "+ broken_marker ;" : "+ fine_change ;"},
                            {"scores", {bad ? 0 : 5, bad ? 1 : 6}}}
                 .dump()
          << '\n';
    }
  }
  const auto model = cmd_qa_train(c);
  CHECK(fs::exists(c.qa_model_path));
  CHECK(qa::QaModel::load(c.qa_model_path).weights == model.weights);

  qa::CrossValidation cv;
  const auto summary = cmd_qa_crossval(c, &cv);
  CHECK(cv.precision == 1.0);
  CHECK(cv.recall == 1.0);
  CHECK(summary.find("precision\t1.0000") != std::string::npos);
  CHECK(count_lines(read_file(c.qa_predictions_path)) == 30);

  qa::ReductionReport rep;
  cmd_qa_report(c, &rep);
  CHECK(rep.bad_reduction == 1.0);
  CHECK(rep.good_cost == 0.0);

  SUBCASE("all not bad gives zeros") {
    std::ofstream out(c.qa_predictions_path, std::ios::trunc);
    for (int s : {0, 1, 6, 7})
      out << nlohmann::json{{"id", "x"}, {"median_score", s}, {"predicted", "not_bad"}}.dump() << '\n';
    out.close();
    cmd_qa_report(c, &rep);
    for (double f : rep.fraction_removed) CHECK(f == 0.0);
    CHECK(rep.bad_reduction == 0.0);
  }
  SUBCASE("single class") {
    write_file(c.gold_path, nlohmann::json{{"id", "a"}, {"diff", "x"}, {"scores", {0}}}.dump() + "\n");
    CHECK_THROWS_AS(cmd_qa_train(c), qa::QaError);
  }
  SUBCASE("malformed gold names the line") {
    write_file(c.gold_path, nlohmann::json{{"id", "a"}, {"diff", "x"}, {"scores", {0}}}.dump() + "\n{oops\n");
    CHECK_THROWS_WITH_AS(cmd_qa_crossval(c), doctest::Contains(":2"), qa::QaError);
  }
}

TEST_CASE("command line exit statuses") {
  TempDir dir("cli");
  auto c = toy_config(dir);
  save_config(c, dir / "cfg.json");
  const std::string cfg = "--config '" + (dir / "cfg.json").string() + "' ";
  write_file(dir / "d.diff", "diff --git a/src/cache.c b/src/cache.c\n+log.debug(msg);\n");
  const std::string diff = "--diff '" + (dir / "d.diff").string() + "'";

  CHECK(run_cli(cfg + "prepare", dir).first == 0);
  CHECK(run_cli(cfg + "train", dir).first == 0);

  const auto ok = run_cli(cfg + "generate " + diff, dir);
  CHECK(ok.first == 0);
  CHECK(ok.second.find("WARNING") == std::string::npos);
  CHECK_FALSE(ok.second.empty());

  write_bad_qa_model(c.qa_model_path);
  const auto warned = run_cli(cfg + "--with-qa generate " + diff, dir);
  CHECK(warned.first == 2);
  CHECK(warned.second == std::string(kQaWarning) + "\n");

  const auto piped = run_cli(cfg + "generate --with-qa < '" + (dir / "d.diff").string() + "'", dir);
  CHECK(piped.first == 2);

  CHECK(run_cli(cfg + "evaluate --smoke", dir).first == 0);
  CHECK(run_cli("--config '" + (dir / "absent.json").string() + "' prepare", dir).first == 1);
  CHECK(run_cli(cfg + "--data-dir '" + (dir / "nothing").string() + "' train", dir).first == 1);
  CHECK(run_cli("frobnicate", dir).first == 1);
  CHECK(run_cli("--help", dir).first == 0);
}
