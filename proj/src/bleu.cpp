#include "cmg/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace cmg::bleu {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++counts[std::vector<std::string>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                      seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

std::pair<std::size_t, std::size_t> ngram_counts(std::size_t n, const std::vector<Pair>& pairs) {
  if (n == 0) throw std::invalid_argument("n-gram order must be at least 1");
  std::size_t clipped = 0, total = 0;
  for (const auto& p : pairs) {
    const auto gen = count_ngrams(p.generated, n);
    const auto ref = count_ngrams(p.reference, n);
    for (const auto& [gram, cnt] : gen) {
      const auto it = ref.find(gram);
      clipped += std::min(cnt, it == ref.end() ? std::size_t{0} : it->second);
      total += cnt;
    }
  }
  return {clipped, total};
}

double modified_precision(std::size_t n, const std::vector<Pair>& pairs) {
  const auto [clipped, total] = ngram_counts(n, pairs);
  return total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
}

double brevity_penalty(std::size_t c, std::size_t r) {
  if (c > r) return 1.0;
  if (c == 0) return r == 0 ? 1.0 : 0.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

BleuReport corpus_bleu(const std::vector<Pair>& pairs, std::size_t max_order, Smoothing smoothing) {
  if (pairs.empty()) throw std::invalid_argument("corpus BLEU needs at least one pair");
  if (max_order == 0) throw std::invalid_argument("BLEU order must be at least 1");

  BleuReport rep;
  rep.smoothed = smoothing == Smoothing::AddOneCounts;
  for (const auto& p : pairs) {
    rep.len_gen += p.generated.size();
    rep.len_ref += p.reference.size();
  }
  rep.bp = brevity_penalty(rep.len_gen, rep.len_ref);

  double log_sum = 0.0;
  bool any_zero = false;
  for (std::size_t n = 1; n <= max_order; ++n) {
    auto [clipped, total] = ngram_counts(n, pairs);
    rep.matches.push_back(clipped);
    rep.totals.push_back(total);
    if (rep.smoothed) {
      ++clipped;
      ++total;
    }
    const double p = total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
    rep.precisions.push_back(p);
    if (p <= 0.0)
      any_zero = true;
    else
      log_sum += std::log(p);
  }
  rep.bleu = any_zero ? 0.0 : 100.0 * rep.bp * std::exp(log_sum / static_cast<double>(max_order));
  return rep;
}

std::vector<Bucket> bucketed_bleu(const std::vector<Pair>& pairs, const std::vector<std::size_t>& source_lengths,
                                  const std::vector<std::size_t>& boundaries) {
  if (pairs.size() != source_lengths.size())
    throw std::invalid_argument("one source length per pair is required");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw std::invalid_argument("bucket boundaries must increase");

  const std::size_t nb = boundaries.size() + 1;
  std::vector<std::vector<Pair>> members(nb);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t b = 0;
    while (b < boundaries.size() && source_lengths[i] > boundaries[b]) ++b;
    members[b].push_back(pairs[i]);
  }

  std::vector<Bucket> buckets(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (b == 0)
      buckets[b].label = "<=" + std::to_string(boundaries.empty() ? 0 : boundaries[0]);
    else if (b == boundaries.size())
      buckets[b].label = ">" + std::to_string(boundaries.back());
    else
      buckets[b].label = ">" + std::to_string(boundaries[b - 1]) + ",<=" + std::to_string(boundaries[b]);
    if (boundaries.empty()) buckets[b].label = "all";
    buckets[b].count = members[b].size();
    if (!members[b].empty()) buckets[b].report = corpus_bleu(members[b]);
  }
  return buckets;
}

std::vector<TokenSequence> retrieval_baseline(const std::vector<PreparedPair>& train,
                                              const std::vector<TokenSequence>& test_sources) {
  if (train.empty()) throw std::invalid_argument("retrieval baseline needs a training set");

  using Profile = std::unordered_map<std::string, double>;
  const auto profile = [](const TokenSequence& seq) {
    Profile p;
    for (const auto& t : seq) p[t] += 1.0;
    return p;
  };
  const auto norm = [](const Profile& p) {
    double s = 0.0;
    for (const auto& [t, v] : p) s += v * v;
    return std::sqrt(s);
  };

  std::vector<Profile> profiles;
  std::vector<double> norms;
  profiles.reserve(train.size());
  for (const auto& pair : train) {
    profiles.push_back(profile(pair.source));
    norms.push_back(norm(profiles.back()));
  }

  std::vector<TokenSequence> out;
  out.reserve(test_sources.size());
  for (const auto& src : test_sources) {
    const auto q = profile(src);
    const double qn = norm(q);
    std::size_t best = 0;
    double best_sim = -1.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      double dot = 0.0;
      for (const auto& [t, v] : q) {
        const auto it = profiles[i].find(t);
        if (it != profiles[i].end()) dot += v * it->second;
      }
      const double denom = qn * norms[i];
      const double sim = denom > 0.0 ? dot / denom : 0.0;
      if (sim > best_sim) {
        best_sim = sim;
        best = i;
      }
    }
    out.push_back(train[best].target);
  }
  return out;
}

std::string format_header(std::size_t max_order) {
  std::string s = "model\tBLEU\tLen_Gen\tLen_Ref";
  for (std::size_t n = 1; n <= max_order; ++n) s += "\tp" + std::to_string(n);
  return s;
}

std::string format_row(const std::string& name, const BleuReport& report) {
  char buf[64];
  std::string s = name;
  std::snprintf(buf, sizeof buf, "\t%.2f\t%zu\t%zu", report.bleu, report.len_gen, report.len_ref);
  s += buf;
  for (double p : report.precisions) {
    std::snprintf(buf, sizeof buf, "\t%.1f", 100.0 * p);
    s += buf;
  }
  if (report.smoothed) s += "\t(smoothed)";
  return s;
}

}  // namespace cmg::bleu
