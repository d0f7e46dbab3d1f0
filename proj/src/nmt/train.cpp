#include <algorithm>
#include <cstdio>
#include <ostream>

#include "cmg/bleu.hpp"
#include "cmg/nmt/train.hpp"
#include "cmg/rng.hpp"

namespace cmg::nmt {

void Hyperparams::validate() const {
  if (embed_dim < 1 || hidden_dim < 1) throw ModelError("embedding and hidden sizes must be positive");
  if (minibatch_size < 1) throw ModelError("minibatch size must be positive");
  if (max_source_len < 1 || max_target_len < 1) throw ModelError("maximum lengths must be positive");
  if (!(adadelta_rho > 0.0 && adadelta_rho < 1.0)) throw ModelError("adadelta rho must lie in (0, 1)");
  if (!(adadelta_eps > 0.0)) throw ModelError("adadelta epsilon must be positive");
  if (!(init_scale >= 0.0)) throw ModelError("init scale must be non-negative");
  if (ensemble_size < 1) throw ModelError("ensemble size must be at least 1");
  if (beam_width < 1) throw ModelError("beam width must be at least 1");
}

std::vector<int> encode_sequence(const Vocabulary& vocab, const TokenSequence& tokens, std::size_t max_len) {
  std::vector<int> ids = vocab.encode(tokens);
  if (ids.size() > max_len) ids.resize(max_len);
  return with_eos(std::move(ids));
}

namespace {

using IdPair = std::pair<std::vector<int>, std::vector<int>>;

std::vector<IdPair> encode_pairs(const std::vector<PreparedPair>& pairs, const Vocabulary& src,
                                 const Vocabulary& tgt, const Hyperparams& h) {
  std::vector<IdPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.emplace_back(encode_sequence(src, p.source, h.max_source_len), encode_sequence(tgt, p.target, h.max_target_len));
  return out;
}

}  // namespace

double greedy_bleu(const Params& params, const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                   const std::vector<PreparedPair>& pairs, const Hyperparams& hyper) {
  std::vector<bleu::Pair> scored;
  scored.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto src = encode_sequence(source_vocab, p.source, hyper.max_source_len);
    scored.push_back({target_vocab.decode(greedy_decode(params, src, hyper.max_target_len)), p.target});
  }
  return bleu::corpus_bleu(scored).bleu;
}

std::vector<Checkpoint> train(const DatasetSplit& split, const Vocabulary& source_vocab,
                              const Vocabulary& target_vocab, const Hyperparams& hyper,
                              const TrainOptions& options) {
  hyper.validate();
  if (split.train.empty()) throw ModelError("training split is empty");
  if (hyper.max_minibatches == 0) throw ModelError("max_minibatches is 0: nothing to train");

  const ModelDims dims{hyper.embed_dim, hyper.hidden_dim, source_vocab.size(), target_vocab.size()};
  const auto data = encode_pairs(split.train, source_vocab, target_vocab, hyper);
  const std::size_t n = data.size();
  const auto batch_size = static_cast<std::size_t>(hyper.minibatch_size);
  const std::uint64_t per_epoch = (n + batch_size - 1) / batch_size;

  Checkpoint state;
  if (options.resume) {
    state = *options.resume;
    if (!(state.params.dims == dims)) throw ModelError("resume checkpoint dimensions differ from configuration");
    if (state.source_vocab_fingerprint != source_vocab.fingerprint() ||
        state.target_vocab_fingerprint != target_vocab.fingerprint())
      throw ModelError("resume checkpoint was trained with different vocabularies");
  } else {
    state.params = Params(dims);
    Rng init_rng(derive_seed(hyper.seed, 0));
    state.params.init_uniform(init_rng, hyper.init_scale);
    state.optimizer = AdadeltaState<double>(dims);
    state.seed = hyper.seed;
    state.source_vocab_fingerprint = source_vocab.fingerprint();
    state.target_vocab_fingerprint = target_vocab.fingerprint();
  }

  std::vector<Checkpoint> saved;
  const auto take_checkpoint = [&] {
    saved.push_back(state);
    if (options.on_checkpoint) options.on_checkpoint(saved.back());
  };

  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> order;
  double loss_sum = 0.0;
  std::uint64_t loss_batches = 0;
  bool stop = false;

  while (!stop && state.minibatch_index < hyper.max_minibatches) {
    const std::uint64_t epoch = state.minibatch_index / per_epoch;
    if (epoch >= hyper.max_epochs) break;
    if (epoch != cached_epoch) {
      Rng shuffle_rng(derive_seed(hyper.seed, epoch + 1));
      order = shuffle_rng.permutation(n);
      cached_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(state.minibatch_index % per_epoch) * batch_size;
    const std::size_t end = std::min(n, begin + batch_size);
    std::vector<IdPair> members;
    for (std::size_t i = begin; i < end; ++i) members.push_back(data[order[i]]);

    const auto g = gradients(state.params, make_batch(members));
    adadelta_update(state.params, g.grad, state.optimizer, hyper.adadelta_rho, hyper.adadelta_eps);
    if (!state.params.all_finite())
      throw ModelError("non-finite parameters after minibatch " + std::to_string(state.minibatch_index));
    ++state.minibatch_index;
    loss_sum += g.mean_loss;
    ++loss_batches;

    if (hyper.validate_every && state.minibatch_index % hyper.validate_every == 0 && !split.valid.empty()) {
      const double bleu = greedy_bleu(state.params, source_vocab, target_vocab, split.valid, hyper);
      state.validation_bleu = bleu;
      if (bleu > state.best_bleu) {
        state.best_bleu = bleu;
        state.bad_validations = 0;
      } else {
        ++state.bad_validations;
      }
      if (options.log) {
        char line[160];
        std::snprintf(line, sizeof line, "minibatch=%llu loss=%.6f valid_bleu=%.4f\n",
                      static_cast<unsigned long long>(state.minibatch_index), loss_sum / double(loss_batches), bleu);
        *options.log << line;
      }
      loss_sum = 0.0;
      loss_batches = 0;
      if (state.bad_validations > hyper.patience) stop = true;
    }
    if (hyper.checkpoint_every && state.minibatch_index % hyper.checkpoint_every == 0) take_checkpoint();
  }

  if (saved.empty() || saved.back().minibatch_index != state.minibatch_index) take_checkpoint();
  return saved;
}

TokenSequence ensemble_decode(const std::vector<const Checkpoint*>& checkpoints, const Vocabulary& source_vocab,
                              const Vocabulary& target_vocab, const TokenSequence& source, std::size_t beam_width,
                              const Hyperparams& hyper) {
  if (checkpoints.empty()) throw ModelError("ensemble decoding needs at least one checkpoint");
  std::vector<const Params*> models;
  for (const auto* c : checkpoints) {
    if (c->source_vocab_fingerprint != checkpoints.front()->source_vocab_fingerprint ||
        c->target_vocab_fingerprint != checkpoints.front()->target_vocab_fingerprint ||
        !(c->params.dims == checkpoints.front()->params.dims))
      throw ModelError("ensemble checkpoints disagree on vocabularies or dimensions");
    if (c->params.dims.source_vocab != source_vocab.size() || c->params.dims.target_vocab != target_vocab.size())
      throw ModelError("checkpoint vocabulary sizes do not match the loaded vocabularies");
    models.push_back(&c->params);
  }
  const auto src = encode_sequence(source_vocab, source, hyper.max_source_len);
  return target_vocab.decode(nmt::ensemble_decode<double>(models, src, beam_width, hyper.max_target_len));
}

}  // namespace cmg::nmt
