#include "cmg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cmg/bleu.hpp"
#include "cmg/vdo.hpp"

namespace cmg {

namespace fs = std::filesystem;
using nlohmann::json;

// --- Configuration -------------------------------------------------------------

namespace {

json optional_to_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::size_t> optional_from_json(const json& j, const char* key, std::optional<std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  if (j[key].is_null()) return std::nullopt;
  return j[key].get<std::size_t>();
}

template <typename T>
void read_field(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j[key].get<T>();
}

}  // namespace

void to_json(json& j, const PipelineConfig& c) {
  const auto& h = c.hyper;
  j = json{
      {"corpus_path", c.corpus_path},
      {"git_repo", c.git_repo},
      {"data_dir", c.data_dir},
      {"checkpoint_dir", c.checkpoint_dir},
      {"qa_model_path", c.qa_model_path},
      {"gold_path", c.gold_path},
      {"qa_predictions_path", c.qa_predictions_path},
      {"lexicon_path", c.lexicon_path},
      {"limits",
       {{"max_source_len", c.limits.max_source_len},
        {"max_target_len", c.limits.max_target_len},
        {"max_diff_bytes", c.limits.max_diff_bytes}}},
      {"source_vocab_cap", optional_to_json(c.source_vocab_cap)},
      {"target_vocab_cap", optional_to_json(c.target_vocab_cap)},
      {"split",
       {{"test_count", optional_to_json(c.split.test_count)},
        {"valid_count", optional_to_json(c.split.valid_count)},
        {"test_fraction", c.split.test_fraction},
        {"valid_fraction", c.split.valid_fraction}}},
      {"vdo", c.vdo},
      {"hyper",
       {{"embed_dim", h.embed_dim},
        {"hidden_dim", h.hidden_dim},
        {"minibatch_size", h.minibatch_size},
        {"max_source_len", h.max_source_len},
        {"max_target_len", h.max_target_len},
        {"adadelta_rho", h.adadelta_rho},
        {"adadelta_eps", h.adadelta_eps},
        {"init_scale", h.init_scale},
        {"validate_every", h.validate_every},
        {"checkpoint_every", h.checkpoint_every},
        {"max_epochs", h.max_epochs},
        {"max_minibatches", h.max_minibatches},
        {"patience", h.patience},
        {"ensemble_size", h.ensemble_size},
        {"beam_width", h.beam_width}}},
      {"svm", {{"lambda", c.svm.lambda}, {"epochs", c.svm.epochs}}},
      {"qa_folds", c.qa_folds},
      {"seed", c.seed},
  };
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  read_field(j, "corpus_path", c.corpus_path);
  read_field(j, "git_repo", c.git_repo);
  read_field(j, "data_dir", c.data_dir);
  read_field(j, "checkpoint_dir", c.checkpoint_dir);
  read_field(j, "qa_model_path", c.qa_model_path);
  read_field(j, "gold_path", c.gold_path);
  read_field(j, "qa_predictions_path", c.qa_predictions_path);
  read_field(j, "lexicon_path", c.lexicon_path);
  if (j.contains("limits")) {
    const auto& l = j["limits"];
    read_field(l, "max_source_len", c.limits.max_source_len);
    read_field(l, "max_target_len", c.limits.max_target_len);
    read_field(l, "max_diff_bytes", c.limits.max_diff_bytes);
  }
  c.source_vocab_cap = optional_from_json(j, "source_vocab_cap", c.source_vocab_cap);
  c.target_vocab_cap = optional_from_json(j, "target_vocab_cap", c.target_vocab_cap);
  if (j.contains("split")) {
    const auto& s = j["split"];
    c.split.test_count = optional_from_json(s, "test_count", c.split.test_count);
    c.split.valid_count = optional_from_json(s, "valid_count", c.split.valid_count);
    read_field(s, "test_fraction", c.split.test_fraction);
    read_field(s, "valid_fraction", c.split.valid_fraction);
  }
  read_field(j, "vdo", c.vdo);
  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    auto& o = c.hyper;
    read_field(h, "embed_dim", o.embed_dim);
    read_field(h, "hidden_dim", o.hidden_dim);
    read_field(h, "minibatch_size", o.minibatch_size);
    read_field(h, "max_source_len", o.max_source_len);
    read_field(h, "max_target_len", o.max_target_len);
    read_field(h, "adadelta_rho", o.adadelta_rho);
    read_field(h, "adadelta_eps", o.adadelta_eps);
    read_field(h, "init_scale", o.init_scale);
    read_field(h, "validate_every", o.validate_every);
    read_field(h, "checkpoint_every", o.checkpoint_every);
    read_field(h, "max_epochs", o.max_epochs);
    read_field(h, "max_minibatches", o.max_minibatches);
    read_field(h, "patience", o.patience);
    read_field(h, "ensemble_size", o.ensemble_size);
    read_field(h, "beam_width", o.beam_width);
  }
  if (j.contains("svm")) {
    read_field(j["svm"], "lambda", c.svm.lambda);
    read_field(j["svm"], "epochs", c.svm.epochs);
  }
  read_field(j, "qa_folds", c.qa_folds);
  read_field(j, "seed", c.seed);
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open config " + path.string());
  try {
    return json::parse(in).get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw CorpusError("malformed config " + path.string() + ": " + e.what());
  }
}

void save_config(const PipelineConfig& config, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write config " + path.string());
  out << json(config).dump(2) << '\n';
}

// --- prepare ----------------------------------------------------------------------

json PrepareReport::to_json() const {
  json j;
  j["stages"] = json::array();
  for (const auto& [name, count] : stages) j["stages"].push_back({{"stage", name}, {"count", count}});
  j["removed"] = removed;
  j["vdo_removed"] = vdo_removed;
  j["split"] = {{"train", train}, {"valid", valid}, {"test", test}};
  j["vocab"] = {{"source", source_vocab}, {"target", target_vocab}};
  return j;
}

namespace {

void write_split(const fs::path& dir, const std::string& name, const std::vector<PreparedPair>& pairs) {
  std::vector<TokenSequence> src, tgt;
  std::ofstream ids(dir / (name + ".ids"), std::ios::binary | std::ios::trunc);
  for (const auto& p : pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
    ids << p.id << '\n';
  }
  write_sequences(dir / (name + ".src"), src);
  write_sequences(dir / (name + ".tgt"), tgt);
}

std::vector<PreparedPair> read_split(const fs::path& dir, const std::string& name) {
  for (const char* ext : {".src", ".tgt", ".ids"})
    if (!fs::exists(dir / (name + ext)))
      throw CorpusError("missing prepared split file " + (dir / (name + ext)).string() + " (run prepare first)");
  const auto src = read_sequences(dir / (name + ".src"));
  const auto tgt = read_sequences(dir / (name + ".tgt"));
  std::ifstream in(dir / (name + ".ids"));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) ids.push_back(line);
  if (src.size() != tgt.size() || src.size() != ids.size())
    throw CorpusError("split " + name + " files are not line-aligned");
  std::vector<PreparedPair> pairs(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pairs[i] = {ids[i], src[i], tgt[i]};
  return pairs;
}

vdo::VerbLexicon lexicon_for(const PipelineConfig& c) {
  return c.lexicon_path.empty() ? vdo::VerbLexicon::builtin() : vdo::VerbLexicon::load(c.lexicon_path);
}

std::string describe_removals(const std::map<std::string, std::size_t>& removed) {
  std::string s;
  for (const auto& [reason, n] : removed) {
    if (n == 0) continue;
    if (!s.empty()) s += ", ";
    s += reason + ": " + std::to_string(n);
  }
  return s;
}

}  // namespace

PrepareReport cmd_prepare(const PipelineConfig& config) {
  PrepareReport report;
  std::vector<Commit> commits;
  if (!config.corpus_path.empty()) {
    commits = ingest_jsonl(config.corpus_path);
  } else if (!config.git_repo.empty()) {
    commits = ingest_git(config.git_repo);
  } else {
    throw CorpusError("no input corpus configured (corpus_path or git_repo)");
  }
  report.stages.emplace_back("ingested", commits.size());
  if (commits.empty()) throw CorpusError("stage ingest produced no commits");

  auto filtered = apply_filters(commits, config.limits);
  report.removed = filtered.report.removed;
  report.stages.emplace_back("filtered", filtered.kept.size());
  if (filtered.kept.empty())
    throw CorpusError("no commits left after stage filter (" + describe_removals(filtered.report.removed) + ")");

  auto pairs = std::move(filtered.kept);
  if (config.vdo) {
    auto [kept, vrep] = vdo::filter_corpus(pairs, lexicon_for(config));
    report.vdo_removed = vrep.removed;
    report.stages.emplace_back("vdo", kept.size());
    if (kept.empty()) throw CorpusError("no commits left after stage vdo");
    pairs = std::move(kept);
  }

  const auto split = split_dataset(std::move(pairs), config.split, config.seed);
  report.train = split.train.size();
  report.valid = split.valid.size();
  report.test = split.test.size();
  if (split.train.empty()) throw CorpusError("no commits left for stage split (training set is empty)");

  std::vector<TokenSequence> src, tgt;
  for (const auto& p : split.train) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  const auto source_vocab = build_vocab(src, config.source_vocab_cap);
  const auto target_vocab = build_vocab(tgt, config.target_vocab_cap);
  report.source_vocab = source_vocab.size();
  report.target_vocab = target_vocab.size();

  const fs::path dir = config.data_dir;
  fs::create_directories(dir);
  write_split(dir, "train", split.train);
  write_split(dir, "valid", split.valid);
  write_split(dir, "test", split.test);
  source_vocab.save(dir / "vocab.src");
  target_vocab.save(dir / "vocab.tgt");
  std::ofstream(dir / "prepare_report.json", std::ios::trunc) << report.to_json().dump(2) << '\n';
  return report;
}

// --- train ------------------------------------------------------------------------

std::vector<fs::path> list_checkpoints(const PipelineConfig& config) {
  std::vector<fs::path> out;
  if (!fs::is_directory(config.checkpoint_dir)) return out;
  for (const auto& e : fs::directory_iterator(config.checkpoint_dir))
    if (e.is_regular_file() && e.path().extension() == ".ckpt") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

fs::path checkpoint_path(const PipelineConfig& config, std::uint64_t minibatch) {
  char name[64];
  std::snprintf(name, sizeof name, "model.%012llu.ckpt", static_cast<unsigned long long>(minibatch));
  return fs::path(config.checkpoint_dir) / name;
}

struct LoadedModel {
  Vocabulary source_vocab, target_vocab;
  std::vector<nmt::Checkpoint> checkpoints;
};

LoadedModel load_ensemble(const PipelineConfig& config) {
  const fs::path dir = config.data_dir;
  LoadedModel m{Vocabulary::load(dir / "vocab.src"), Vocabulary::load(dir / "vocab.tgt"), {}};
  auto paths = list_checkpoints(config);
  if (paths.empty()) throw nmt::ModelError("no checkpoints in " + config.checkpoint_dir + " (run train first)");
  const auto k = static_cast<std::size_t>(config.hyper.ensemble_size);
  if (paths.size() > k) paths.erase(paths.begin(), paths.end() - static_cast<std::ptrdiff_t>(k));
  for (const auto& p : paths) {
    m.checkpoints.push_back(nmt::load_checkpoint(p, m.source_vocab.size(), m.target_vocab.size()));
    if (m.checkpoints.back().source_vocab_fingerprint != m.source_vocab.fingerprint() ||
        m.checkpoints.back().target_vocab_fingerprint != m.target_vocab.fingerprint())
      throw nmt::ModelError("checkpoint " + p.string() + " does not match the prepared vocabularies");
  }
  return m;
}

std::vector<const nmt::Checkpoint*> pointers(const std::vector<nmt::Checkpoint>& cs) {
  std::vector<const nmt::Checkpoint*> out;
  for (const auto& c : cs) out.push_back(&c);
  return out;
}

}  // namespace

std::vector<fs::path> cmd_train(const PipelineConfig& config, bool resume) {
  const fs::path dir = config.data_dir;
  DatasetSplit split;
  split.train = read_split(dir, "train");
  split.valid = read_split(dir, "valid");
  split.seed = config.seed;
  const auto source_vocab = Vocabulary::load(dir / "vocab.src");
  const auto target_vocab = Vocabulary::load(dir / "vocab.tgt");

  auto hyper = config.hyper;
  hyper.seed = config.seed;
  if (hyper.max_minibatches == 0) throw nmt::ModelError("max_minibatches is 0: nothing to train");

  nmt::TrainOptions options;
  if (resume) {
    const auto existing = list_checkpoints(config);
    if (!existing.empty())
      options.resume = nmt::load_checkpoint(existing.back(), source_vocab.size(), target_vocab.size());
  }

  fs::create_directories(config.checkpoint_dir);
  // A fresh run must not leave older checkpoints for the ensemble to pick up.
  if (!resume)
    for (const auto& p : list_checkpoints(config)) fs::remove(p);
  std::ofstream log(fs::path(config.checkpoint_dir) / "train.log", resume ? std::ios::app : std::ios::trunc);
  options.log = &log;
  std::vector<fs::path> written;
  options.on_checkpoint = [&](const nmt::Checkpoint& c) {
    const auto path = checkpoint_path(config, c.minibatch_index);
    nmt::save_checkpoint(c, path);
    written.push_back(path);
  };
  nmt::train(split, source_vocab, target_vocab, hyper, options);
  return written;
}

// --- generate ---------------------------------------------------------------------

GenerateResult cmd_generate(const PipelineConfig& config, const std::string& diff_text, bool with_qa) {
  const auto model = load_ensemble(config);
  std::optional<qa::QaModel> qa_model;
  if (with_qa) qa_model = qa::QaModel::load(config.qa_model_path);

  const auto source = preprocess_diff(diff_text);
  if (qa_model && qa::predict(source, *qa_model).label == qa::Label::Bad) return {true, kQaWarning};

  const auto tokens = nmt::ensemble_decode(pointers(model.checkpoints), model.source_vocab, model.target_vocab,
                                           source, static_cast<std::size_t>(config.hyper.beam_width), config.hyper);
  return {false, join_tokens(tokens)};
}

// --- evaluate ---------------------------------------------------------------------

std::string cmd_evaluate(const PipelineConfig& config, bool smoke) {
  const fs::path dir = config.data_dir;
  const auto train = read_split(dir, "train");
  const auto test = read_split(dir, "test");
  if (test.empty()) throw CorpusError("test split is empty");

  std::vector<TokenSequence> generated;
  std::string model_name = "nmt";
  if (smoke) {
    model_name = "reference";
    for (const auto& p : test) generated.push_back(p.target);
  } else {
    const auto model = load_ensemble(config);
    const auto ptrs = pointers(model.checkpoints);
    for (const auto& p : test)
      generated.push_back(nmt::ensemble_decode(ptrs, model.source_vocab, model.target_vocab, p.source,
                                               static_cast<std::size_t>(config.hyper.beam_width), config.hyper));
  }

  std::vector<bleu::Pair> pairs;
  std::vector<std::size_t> lengths;
  std::vector<TokenSequence> sources;
  for (std::size_t i = 0; i < test.size(); ++i) {
    pairs.push_back({generated[i], test[i].target});
    lengths.push_back(test[i].source.size());
    sources.push_back(test[i].source);
  }
  const auto baseline = bleu::retrieval_baseline(train, sources);
  std::vector<bleu::Pair> baseline_pairs;
  for (std::size_t i = 0; i < test.size(); ++i) baseline_pairs.push_back({baseline[i], test[i].target});

  std::ostringstream out;
  out << "# corpus BLEU on " << test.size() << " test pairs\n";
  out << bleu::format_header() << '\n';
  out << bleu::format_row("retrieval", bleu::corpus_bleu(baseline_pairs)) << '\n';
  out << bleu::format_row(model_name, bleu::corpus_bleu(pairs)) << '\n';
  out << "\n# " << model_name << " BLEU by diff length\n";
  out << "bucket\tcount\tBLEU\tLen_Gen\tLen_Ref\tp1\tp2\tp3\tp4\n";
  for (const auto& b : bleu::bucketed_bleu(pairs, lengths)) {
    if (b.report) {
      auto row = bleu::format_row(b.label, *b.report);
      row.insert(b.label.size(), "\t" + std::to_string(b.count));
      out << row << '\n';
    } else {
      out << b.label << "\t0\t-\t0\t0\t-\t-\t-\t-\n";
    }
  }
  return out.str();
}

// --- qa -----------------------------------------------------------------------------

namespace {

std::vector<qa::GoldRecord> gold_for(const PipelineConfig& config) {
  if (config.gold_path.empty()) throw qa::QaError("no gold set configured (gold_path)");
  return qa::load_gold(config.gold_path);
}

qa::SvmHyper svm_for(const PipelineConfig& config) {
  auto h = config.svm;
  h.seed = config.seed;
  return h;
}

}  // namespace

qa::QaModel cmd_qa_train(const PipelineConfig& config) {
  const auto model = qa::train_svm(gold_for(config), svm_for(config));
  model.save(config.qa_model_path);
  return model;
}

std::string cmd_qa_crossval(const PipelineConfig& config, qa::CrossValidation* out) {
  const auto gold = gold_for(config);
  const auto cv = qa::cross_validate(gold, config.qa_folds, svm_for(config), config.seed);

  std::ofstream preds(config.qa_predictions_path, std::ios::trunc);
  if (!preds) throw qa::QaError("cannot write " + config.qa_predictions_path);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    preds << json{{"id", gold[i].id},
                  {"median_score", gold[i].median_score},
                  {"label", gold[i].label == qa::Label::Bad ? "bad" : "not_bad"},
                  {"predicted", cv.predictions[i].label == qa::Label::Bad ? "bad" : "not_bad"},
                  {"margin", cv.predictions[i].margin},
                  {"fold", cv.fold_of[i]}}
                 .dump()
          << '\n';
  }

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "folds\t%zu\nrecords\t%zu\nprecision\t%.4f\nrecall\t%.4f\ntp\t%zu\nfp\t%zu\nfn\t%zu\ntn\t%zu\n",
                config.qa_folds, gold.size(), cv.precision, cv.recall, cv.true_pos, cv.false_pos, cv.false_neg,
                cv.true_neg);
  if (out) *out = cv;
  return buf;
}

std::string cmd_qa_report(const PipelineConfig& config, qa::ReductionReport* out) {
  std::ifstream in(config.qa_predictions_path);
  if (!in) throw qa::QaError("cannot open " + config.qa_predictions_path + " (run qa crossval first)");
  std::vector<int> scores;
  std::vector<qa::Label> predicted;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      scores.push_back(j.at("median_score").get<int>());
      predicted.push_back(j.at("predicted").get<std::string>() == "bad" ? qa::Label::Bad : qa::Label::NotBad);
    } catch (const json::exception& e) {
      throw qa::QaError(config.qa_predictions_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  const auto rep = qa::reduction_report(scores, predicted);
  std::ostringstream s;
  s << "score\tcount\tremoved\tfraction\n";
  char buf[96];
  for (std::size_t i = 0; i <= qa::kMaxScore; ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%zu\t%zu\t%.4f\n", i, rep.count[i], rep.removed[i], rep.fraction_removed[i]);
    s << buf;
  }
  std::snprintf(buf, sizeof buf, "bad_reduction\t%.4f\ngood_cost\t%.4f\n", rep.bad_reduction, rep.good_cost);
  s << buf;
  if (out) *out = rep;
  return s.str();
}

}  // namespace cmg
