#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "cmg/nmt/model.hpp"

namespace cmg::nmt {

/// Anything that can extend a prefix: `State initial() const` and
/// `std::pair<State, Eigen::VectorXd> step(const State&, int prev_token) const`
/// where the vector holds next-token probabilities and the first step is fed
/// START.
template <typename M>
concept Stepper = requires(const M& m, const typename M::State& s) {
  { m.initial() } -> std::convertible_to<typename M::State>;
  { m.step(s, 0) };
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the terminating EOS when present
  double score = 0.0;       // sum of log probabilities
};

/// Beam search. A hypothesis completes when it emits EOS or reaches
/// max_steps tokens. Each step keeps the (beam_width - completed) best
/// extensions; ties go to the earlier hypothesis and lower token id. Returns
/// the best completed hypothesis.
template <Stepper M>
Hypothesis beam_search(const M& model, std::size_t beam_width, std::size_t max_steps, int eos = kEos) {
  if (beam_width < 1) throw ModelError("beam width must be at least 1");
  if (max_steps < 1) throw ModelError("decoding needs at least one step");
  using State = typename M::State;

  struct Live {
    Hypothesis hyp;
    State state;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    int token;
  };

  std::vector<Live> live;
  live.push_back({Hypothesis{}, model.initial()});
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    std::vector<State> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].hyp.tokens.empty() ? kStart : live[h].hyp.tokens.back();
      auto [state, probs] = model.step(live[h].state, prev);
      next_states.push_back(std::move(state));
      for (Eigen::Index v = 0; v < probs.size(); ++v)
        candidates.push_back({live[h].hyp.score + std::log(probs(v)), h, static_cast<int>(v)});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    const std::size_t keep = std::min(candidates.size(), beam_width - finished.size());
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      Hypothesis hyp{live[c.parent].hyp.tokens, c.score};
      hyp.tokens.push_back(c.token);
      if (c.token == eos || step + 1 == max_steps)
        finished.push_back(std::move(hyp));
      else
        next.push_back({std::move(hyp), next_states[c.parent]});
    }
    live = std::move(next);
  }

  const auto best = std::max_element(finished.begin(), finished.end(), [](const auto& a, const auto& b) {
    return a.score < b.score;
  });
  return *best;
}

/// Decoding over one or more models with identical dimensions; next-token
/// distributions are the arithmetic mean of the members' probabilities.
template <typename Scalar>
class EnsembleStepper {
public:
  using State = std::vector<Vector<Scalar>>;

  EnsembleStepper(std::span<const ModelParams<Scalar>* const> models, std::span<const int> source) {
    if (models.empty()) throw ModelError("ensemble needs at least one model");
    for (const auto* m : models) {
      if (!(m->dims == models.front()->dims)) throw ModelError("ensemble members have different dimensions");
      models_.push_back(m);
      sources_.push_back(prepare_source(*m, encode(*m, source)));
    }
  }

  State initial() const {
    State s;
    for (std::size_t k = 0; k < models_.size(); ++k) s.push_back(decoder_init(*models_[k], sources_[k].annotations));
    return s;
  }

  std::pair<State, Eigen::VectorXd> step(const State& state, int prev) const {
    State next;
    // Long double keeps the sum of k equal members exact, so a k-copy
    // ensemble reproduces the single-model distribution bit for bit.
    Eigen::Matrix<long double, Eigen::Dynamic, 1> sum;
    for (std::size_t k = 0; k < models_.size(); ++k) {
      auto out = decoder_step(*models_[k], state[k], prev, sources_[k]);
      if (k == 0)
        sum = out.probs.template cast<long double>();
      else
        sum += out.probs.template cast<long double>();
      next.push_back(std::move(out.state));
    }
    sum /= static_cast<long double>(models_.size());
    return {std::move(next), sum.template cast<double>()};
  }

private:
  std::vector<const ModelParams<Scalar>*> models_;
  std::vector<EncodedSource<Scalar>> sources_;
};

/// Token ids without the trailing EOS.
inline std::vector<int> strip_eos(std::vector<int> ids) {
  if (!ids.empty() && ids.back() == kEos) ids.pop_back();
  return ids;
}

/// source must end with EOS. max_target_len excludes EOS.
template <typename Scalar>
std::vector<int> ensemble_decode(std::span<const ModelParams<Scalar>* const> models, std::span<const int> source,
                                 std::size_t beam_width, std::size_t max_target_len) {
  EnsembleStepper<Scalar> stepper(models, source);
  return strip_eos(beam_search(stepper, beam_width, max_target_len + 1).tokens);
}

/// Argmax at every step until EOS or max_target_len + 1 tokens.
template <typename Scalar>
std::vector<int> greedy_decode(const ModelParams<Scalar>& model, std::span<const int> source,
                               std::size_t max_target_len) {
  const auto src = prepare_source(model, encode(model, source));
  Vector<Scalar> state = decoder_init(model, src.annotations);
  std::vector<int> out;
  int prev = kStart;
  for (std::size_t t = 0; t <= max_target_len; ++t) {
    auto step = decoder_step(model, state, prev, src);
    Eigen::Index best = 0;
    step.probs.maxCoeff(&best);
    prev = static_cast<int>(best);
    out.push_back(prev);
    if (prev == kEos) break;
    state = std::move(step.state);
  }
  return strip_eos(out);
}

}  // namespace cmg::nmt
