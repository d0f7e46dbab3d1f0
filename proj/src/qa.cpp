#include "cmg/qa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>

#include <json.hpp>

#include "cmg/rng.hpp"

namespace cmg::qa {

int median_score(const std::vector<int>& scores) {
  if (scores.empty()) throw QaError("a gold record needs at least one score");
  for (int s : scores)
    if (s < 0 || s > kMaxScore) throw QaError("score " + std::to_string(s) + " outside [0, 7]");
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2;  // non-negative, so division floors
}

Label label_for(int median) { return median <= 1 ? Label::Bad : Label::NotBad; }

GoldRecord GoldRecord::make(std::string id, TokenSequence diff, std::vector<int> scores) {
  GoldRecord r;
  r.id = std::move(id);
  r.diff = std::move(diff);
  r.median_score = qa::median_score(scores);
  r.scores = std::move(scores);
  r.label = label_for(r.median_score);
  return r;
}

std::vector<GoldRecord> load_gold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw QaError("cannot open gold set " + path.string());
  std::vector<GoldRecord> gold;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const auto rec = nlohmann::json::parse(line);
      if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
        throw QaError(where + "missing string field \"id\"");
      if (!rec.contains("diff") || !rec["diff"].is_string()) throw QaError(where + "missing string field \"diff\"");
      if (!rec.contains("scores") || !rec["scores"].is_array()) throw QaError(where + "missing array field \"scores\"");
      std::vector<int> scores;
      for (const auto& s : rec["scores"]) {
        if (!s.is_number_integer()) throw QaError(where + "scores must be integers");
        scores.push_back(s.get<int>());
      }
      if (scores.empty() || scores.size() > 3) throw QaError(where + "expected 1 to 3 scores");
      gold.push_back(GoldRecord::make(rec["id"].get<std::string>(), preprocess_diff(rec["diff"].get<std::string>()),
                                      std::move(scores)));
    } catch (const nlohmann::json::exception& e) {
      throw QaError(where + "malformed record: " + e.what());
    } catch (const QaError& e) {
      const std::string msg = e.what();
      throw QaError(msg.rfind(where, 0) == 0 ? msg : where + msg);
    }
  }
  return gold;
}

IdfTable compute_idf(const std::vector<TokenSequence>& diffs) {
  if (diffs.empty()) throw QaError("idf needs a non-empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& d : diffs) {
    std::set<std::string> seen(d.begin(), d.end());
    for (const auto& t : seen) ++df[t];
  }
  IdfTable table;
  table.idf.resize(static_cast<Eigen::Index>(df.size()));
  const double docs = static_cast<double>(diffs.size());
  int i = 0;
  for (const auto& [tok, count] : df) {
    table.feature_index[tok] = i;
    table.idf(i) = std::log((1.0 + docs) / (1.0 + static_cast<double>(count))) + 1.0;
    ++i;
  }
  return table;
}

FeatureVector tfidf(const TokenSequence& diff, const IdfTable& table) {
  std::map<int, double> counts;
  for (const auto& t : diff) {
    const auto it = table.feature_index.find(t);
    if (it != table.feature_index.end()) counts[it->second] += 1.0;
  }
  FeatureVector x(table.size());
  double norm_sq = 0.0;
  for (auto& [idx, c] : counts) {
    c *= table.idf(idx);
    norm_sq += c * c;
  }
  if (norm_sq == 0.0) return x;
  const double inv = 1.0 / std::sqrt(norm_sq);
  x.reserve(static_cast<Eigen::Index>(counts.size()));
  for (const auto& [idx, v] : counts) x.insertBack(idx) = v * inv;
  return x;
}

QaModel train_svm(const std::vector<GoldRecord>& gold, const SvmHyper& hyper) {
  const bool any_bad = std::any_of(gold.begin(), gold.end(), [](const auto& r) { return r.label == Label::Bad; });
  const bool any_good = std::any_of(gold.begin(), gold.end(), [](const auto& r) { return r.label == Label::NotBad; });
  if (!any_bad || !any_good) throw QaError("the gold set must contain both bad and not-bad records");
  if (!(hyper.lambda > 0.0) || hyper.epochs < 1) throw QaError("SVM needs lambda > 0 and at least one epoch");

  std::vector<TokenSequence> diffs;
  diffs.reserve(gold.size());
  for (const auto& r : gold) diffs.push_back(r.diff);

  QaModel m;
  m.hyper = hyper;
  m.table = compute_idf(diffs);
  m.weights = Eigen::VectorXd::Zero(m.table.size());

  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (const auto& r : gold) {
    xs.push_back(tfidf(r.diff, m.table));
    ys.push_back(r.label == Label::Bad ? 1.0 : -1.0);
  }

  Rng rng(hyper.seed);
  std::vector<std::size_t> order(gold.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (hyper.lambda * static_cast<double>(t));
      const double margin = ys[i] * (xs[i].dot(m.weights) + m.bias);
      m.weights *= 1.0 - eta * hyper.lambda;
      if (margin < 1.0) {
        for (FeatureVector::InnerIterator it(xs[i]); it; ++it) m.weights(it.index()) += eta * ys[i] * it.value();
        m.bias += eta * ys[i];
      }
    }
  }
  if (!m.weights.allFinite() || !std::isfinite(m.bias)) throw QaError("SVM training diverged");
  return m;
}

Prediction predict(const TokenSequence& diff, const QaModel& model) {
  const auto x = tfidf(diff, model.table);
  Prediction p;
  p.margin = x.dot(model.weights) + model.bias;
  p.label = p.margin > 0.0 ? Label::Bad : Label::NotBad;
  return p;
}

std::vector<std::size_t> fold_sizes(std::size_t n, std::size_t k) {
  std::vector<std::size_t> sizes(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) ++sizes[i];
  return sizes;
}

CrossValidation cross_validate(const std::vector<GoldRecord>& gold, std::size_t k, const SvmHyper& hyper,
                               std::uint64_t seed) {
  if (k < 2) throw QaError("cross-validation needs at least 2 folds");
  if (gold.size() < k)
    throw QaError("cannot split " + std::to_string(gold.size()) + " records into " + std::to_string(k) + " folds");

  Rng rng(seed);
  const auto order = rng.permutation(gold.size());
  const auto sizes = fold_sizes(gold.size(), k);

  CrossValidation cv;
  cv.predictions.resize(gold.size());
  cv.fold_of.assign(gold.size(), -1);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t end = start + sizes[f];
    std::vector<GoldRecord> train;
    train.reserve(gold.size() - sizes[f]);
    for (std::size_t i = 0; i < order.size(); ++i)
      if (i < start || i >= end) train.push_back(gold[order[i]]);
    SvmHyper fold_hyper = hyper;
    fold_hyper.seed = derive_seed(hyper.seed, f);
    const bool has_bad = std::any_of(train.begin(), train.end(), [](const auto& r) { return r.label == Label::Bad; });
    const bool has_good =
        std::any_of(train.begin(), train.end(), [](const auto& r) { return r.label == Label::NotBad; });
    // A single-class training fold cannot train an SVM; it predicts its class.
    std::optional<QaModel> model;
    if (has_bad && has_good) model = train_svm(train, fold_hyper);
    for (std::size_t i = start; i < end; ++i) {
      if (model) {
        cv.predictions[order[i]] = predict(gold[order[i]].diff, *model);
      } else {
        const bool bad = has_bad;
        cv.predictions[order[i]] = {bad ? Label::Bad : Label::NotBad, bad ? 1.0 : -1.0};
      }
      cv.fold_of[order[i]] = static_cast<int>(f);
    }
    start = end;
  }

  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool actual = gold[i].label == Label::Bad;
    const bool predicted = cv.predictions[i].label == Label::Bad;
    if (actual && predicted)
      ++cv.true_pos;
    else if (!actual && predicted)
      ++cv.false_pos;
    else if (actual)
      ++cv.false_neg;
    else
      ++cv.true_neg;
  }
  if (cv.true_pos + cv.false_pos) cv.precision = double(cv.true_pos) / double(cv.true_pos + cv.false_pos);
  if (cv.true_pos + cv.false_neg) cv.recall = double(cv.true_pos) / double(cv.true_pos + cv.false_neg);
  return cv;
}

ReductionReport reduction_report(const std::vector<int>& median_scores, const std::vector<Label>& predicted) {
  if (median_scores.size() != predicted.size()) throw QaError("one prediction per record is required");
  ReductionReport rep;
  std::size_t bad_total = 0, bad_removed = 0, good_total = 0, good_removed = 0;
  for (std::size_t i = 0; i < median_scores.size(); ++i) {
    const int s = median_scores[i];
    if (s < 0 || s > kMaxScore) throw QaError("median score outside [0, 7]");
    const bool removed = predicted[i] == Label::Bad;
    ++rep.count[static_cast<std::size_t>(s)];
    if (removed) ++rep.removed[static_cast<std::size_t>(s)];
    if (s <= 1) {
      ++bad_total;
      bad_removed += removed;
    }
    if (s >= 6) {
      ++good_total;
      good_removed += removed;
    }
  }
  for (std::size_t s = 0; s <= kMaxScore; ++s)
    if (rep.count[s]) rep.fraction_removed[s] = double(rep.removed[s]) / double(rep.count[s]);
  if (bad_total) rep.bad_reduction = double(bad_removed) / double(bad_total);
  if (good_total) rep.good_cost = double(good_removed) / double(good_total);
  return rep;
}

// --- Model file --------------------------------------------------------------

namespace {
constexpr const char* kFormat = "cmg-qa-model";
constexpr int kVersion = 1;
}  // namespace

void QaModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  std::vector<std::string> features(static_cast<std::size_t>(table.size()));
  for (const auto& [tok, idx] : table.feature_index) features[static_cast<std::size_t>(idx)] = tok;
  j["features"] = features;
  j["idf"] = std::vector<double>(table.idf.data(), table.idf.data() + table.idf.size());
  j["weights"] = std::vector<double>(weights.data(), weights.data() + weights.size());
  j["bias"] = bias;
  j["hyper"] = {{"lambda", hyper.lambda}, {"epochs", hyper.epochs}, {"seed", hyper.seed}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw QaError("cannot write QA model " + path.string());
  out << j.dump() << '\n';
}

QaModel QaModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw QaError("cannot open QA model " + path.string());
  QaModel m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != kFormat) throw QaError(path.string() + " is not a QA model");
    if (j.at("version") != kVersion) throw QaError("unsupported QA model version in " + path.string());
    const auto features = j.at("features").get<std::vector<std::string>>();
    const auto idf = j.at("idf").get<std::vector<double>>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (idf.size() != features.size() || w.size() != features.size())
      throw QaError("QA model " + path.string() + " has inconsistent sizes");
    for (std::size_t i = 0; i < features.size(); ++i) m.table.feature_index[features[i]] = static_cast<int>(i);
    if (m.table.feature_index.size() != features.size()) throw QaError("duplicate feature in " + path.string());
    m.table.idf = Eigen::Map<const Eigen::VectorXd>(idf.data(), static_cast<Eigen::Index>(idf.size()));
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = j.at("bias").get<double>();
    m.hyper.lambda = j.at("hyper").at("lambda").get<double>();
    m.hyper.epochs = j.at("hyper").at("epochs").get<int>();
    m.hyper.seed = j.at("hyper").at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw QaError("malformed QA model " + path.string() + ": " + e.what());
  }
  if ((m.table.idf.array() < 0.0).any() || !m.table.idf.allFinite() || !m.weights.allFinite())
    throw QaError("QA model " + path.string() + " has invalid values");
  return m;
}

}  // namespace cmg::qa
