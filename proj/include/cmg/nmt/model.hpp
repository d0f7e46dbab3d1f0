#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cmg/corpus.hpp"
#include "cmg/nmt/params.hpp"

namespace cmg::nmt {

inline constexpr int kPad = Vocabulary::kPad;
inline constexpr int kStart = Vocabulary::kStart;
inline constexpr int kEos = Vocabulary::kEos;

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// --- Gated recurrent unit -------------------------------------------------

template <typename Scalar>
struct GruCache {
  Vector<Scalar> x, h_prev, z, r, cand;
};

template <typename Scalar>
Vector<Scalar> gru_forward(const GruParams<Scalar>& p, const Vector<Scalar>& x, const Vector<Scalar>& h_prev,
                           GruCache<Scalar>* cache = nullptr) {
  Vector<Scalar> z = sigmoid(p.wz * x + p.uz * h_prev + p.bz);
  Vector<Scalar> r = sigmoid(p.wr * x + p.ur * h_prev + p.br);
  Vector<Scalar> cand = (p.wh * x + p.uh * r.cwiseProduct(h_prev) + p.bh).array().tanh().matrix();
  Vector<Scalar> h = h_prev + z.cwiseProduct(cand - h_prev);
  if (cache) *cache = {x, h_prev, std::move(z), std::move(r), std::move(cand)};
  return h;
}

/// Accumulates parameter gradients into g; returns (dx, dh_prev).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> gru_backward(const GruParams<Scalar>& p, const GruCache<Scalar>& c,
                                                       const Vector<Scalar>& dh, GruParams<Scalar>& g) {
  const auto one = Scalar(1);
  Vector<Scalar> dz = dh.cwiseProduct(c.cand - c.h_prev);
  Vector<Scalar> dcand = dh.cwiseProduct(c.z);
  Vector<Scalar> dh_prev = dh.cwiseProduct((one - c.z.array()).matrix());

  Vector<Scalar> da_cand = dcand.cwiseProduct((one - c.cand.array().square()).matrix());
  const Vector<Scalar> rh = c.r.cwiseProduct(c.h_prev);
  g.wh.noalias() += da_cand * c.x.transpose();
  g.uh.noalias() += da_cand * rh.transpose();
  g.bh += da_cand;
  Vector<Scalar> drh = p.uh.transpose() * da_cand;
  Vector<Scalar> dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  Vector<Scalar> da_z = dz.cwiseProduct(c.z.cwiseProduct((one - c.z.array()).matrix()));
  Vector<Scalar> da_r = dr.cwiseProduct(c.r.cwiseProduct((one - c.r.array()).matrix()));
  g.wz.noalias() += da_z * c.x.transpose();
  g.uz.noalias() += da_z * c.h_prev.transpose();
  g.bz += da_z;
  g.wr.noalias() += da_r * c.x.transpose();
  g.ur.noalias() += da_r * c.h_prev.transpose();
  g.br += da_r;

  Vector<Scalar> dx = p.wh.transpose() * da_cand + p.wz.transpose() * da_z + p.wr.transpose() * da_r;
  dh_prev.noalias() += p.uz.transpose() * da_z + p.ur.transpose() * da_r;
  return {std::move(dx), std::move(dh_prev)};
}

// --- Encoder ----------------------------------------------------------------

template <typename Scalar>
struct EncoderCache {
  std::vector<int> source;
  std::vector<GruCache<Scalar>> fwd, bwd;  // bwd[i] is the step that produced position i
  Matrix<Scalar> annotations;              // 2*hidden x T
};

inline void check_ids(std::span<const int> ids, int vocab_size) {
  for (int id : ids)
    if (id < 0 || id >= vocab_size)
      throw ModelError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab_size));
}

/// Column i is [forward state after x_1..x_i ; backward state after x_T..x_i].
template <typename Scalar>
Matrix<Scalar> encode(const ModelParams<Scalar>& p, std::span<const int> source,
                      EncoderCache<Scalar>* cache = nullptr) {
  if (source.empty()) throw ModelError("empty source sequence");
  check_ids(source, p.dims.source_vocab);
  const int H = p.dims.hidden;
  const auto T = static_cast<Eigen::Index>(source.size());
  Matrix<Scalar> ann(2 * H, T);

  std::vector<GruCache<Scalar>> fwd(source.size()), bwd(source.size());
  Vector<Scalar> h = Vector<Scalar>::Zero(H);
  for (Eigen::Index i = 0; i < T; ++i) {
    h = gru_forward<Scalar>(p.encoder_fwd, p.source_embed.col(source[i]), h, cache ? &fwd[i] : nullptr);
    ann.col(i).head(H) = h;
  }
  h.setZero();
  for (Eigen::Index i = T - 1; i >= 0; --i) {
    h = gru_forward<Scalar>(p.encoder_bwd, p.source_embed.col(source[i]), h, cache ? &bwd[i] : nullptr);
    ann.col(i).tail(H) = h;
  }
  if (cache) {
    cache->source.assign(source.begin(), source.end());
    cache->fwd = std::move(fwd);
    cache->bwd = std::move(bwd);
    cache->annotations = ann;
  }
  return ann;
}

/// Precomputed attention keys (attn_key * annotations) for one source.
template <typename Scalar>
struct EncodedSource {
  Matrix<Scalar> annotations;
  Matrix<Scalar> keys;
};

template <typename Scalar>
EncodedSource<Scalar> prepare_source(const ModelParams<Scalar>& p, Matrix<Scalar> annotations) {
  Matrix<Scalar> keys = p.attn_key * annotations;
  return {std::move(annotations), std::move(keys)};
}

// --- Attention ----------------------------------------------------------------

template <typename Scalar>
struct Attention {
  Vector<Scalar> context;  // 2*hidden
  Vector<Scalar> weights;  // T, on the simplex
  Matrix<Scalar> hidden;   // tanh activations, hidden x T
};

/// weights = softmax_i(attn_score . tanh(attn_query s + attn_key a_i)).
template <typename Scalar>
Attention<Scalar> attend(const ModelParams<Scalar>& p, const Vector<Scalar>& prev_state,
                         const EncodedSource<Scalar>& src) {
  if (src.annotations.cols() == 0) throw ModelError("attention over zero annotations");
  Attention<Scalar> a;
  const Vector<Scalar> q = p.attn_query * prev_state;
  a.hidden = (src.keys.colwise() + q).array().tanh().matrix();
  const Vector<Scalar> scores = a.hidden.transpose() * p.attn_score;
  a.weights = softmax<Scalar>(scores);
  a.context = src.annotations * a.weights;
  return a;
}

template <typename Scalar>
Attention<Scalar> attend(const ModelParams<Scalar>& p, const Vector<Scalar>& prev_state,
                         const Matrix<Scalar>& annotations) {
  return attend(p, prev_state, prepare_source(p, annotations));
}

// --- Decoder ------------------------------------------------------------------

/// tanh(init_weight * (first backward state) + init_bias).
template <typename Scalar>
Vector<Scalar> decoder_init(const ModelParams<Scalar>& p, const Matrix<Scalar>& annotations) {
  const int H = p.dims.hidden;
  return (p.init_weight * annotations.col(0).tail(H) + p.init_bias).array().tanh().matrix();
}

template <typename Scalar>
struct DecoderStepCache {
  int prev_token = 0;
  Vector<Scalar> prev_state;
  Attention<Scalar> attention;
  GruCache<Scalar> gru;
  Vector<Scalar> readout;
  Vector<Scalar> probs;
};

template <typename Scalar>
struct DecoderOutput {
  Vector<Scalar> state;
  Vector<Scalar> probs;  // over the target vocabulary
};

template <typename Scalar>
DecoderOutput<Scalar> decoder_step(const ModelParams<Scalar>& p, const Vector<Scalar>& prev_state, int prev_token,
                                   const EncodedSource<Scalar>& src, DecoderStepCache<Scalar>* cache = nullptr) {
  if (prev_token < 0 || prev_token >= p.dims.target_vocab)
    throw ModelError("previous target id out of range: " + std::to_string(prev_token));
  const int E = p.dims.embed;
  const int A = p.dims.annotation();
  auto att = attend(p, prev_state, src);

  Vector<Scalar> input(E + A);
  input << p.target_embed.col(prev_token), att.context;
  GruCache<Scalar> gc;
  Vector<Scalar> state = gru_forward<Scalar>(p.decoder, input, prev_state, cache ? &gc : nullptr);

  Vector<Scalar> readout(p.dims.readout());
  readout << state, p.target_embed.col(prev_token), att.context;
  Vector<Scalar> probs = softmax<Scalar>(p.out_weight * readout + p.out_bias);

  if (cache) *cache = {prev_token, prev_state, std::move(att), std::move(gc), readout, probs};
  return {std::move(state), std::move(probs)};
}

template <typename Scalar>
DecoderOutput<Scalar> decoder_step(const ModelParams<Scalar>& p, const Vector<Scalar>& prev_state, int prev_token,
                                   const Matrix<Scalar>& annotations) {
  return decoder_step(p, prev_state, prev_token, prepare_source(p, annotations));
}

// --- Loss and gradients -------------------------------------------------------

struct LossValue {
  double nll = 0.0;
  std::size_t tokens = 0;
};

/// Teacher-forced negative log-likelihood of target given source. Both
/// sequences must already end with EOS.
template <typename Scalar>
LossValue sequence_loss(const ModelParams<Scalar>& p, std::span<const int> source, std::span<const int> target) {
  if (target.empty()) throw ModelError("empty target sequence");
  check_ids(target, p.dims.target_vocab);
  const auto src = prepare_source(p, encode(p, source));
  Vector<Scalar> state = decoder_init(p, src.annotations);
  int prev = kStart;
  LossValue loss;
  for (int y : target) {
    auto out = decoder_step(p, state, prev, src);
    loss.nll -= std::log(static_cast<double>(out.probs(y)));
    state = std::move(out.state);
    prev = y;
  }
  loss.tokens = target.size();
  return loss;
}

/// Adds scale * d(nll)/d(params) into grad; returns the unscaled loss.
template <typename Scalar>
LossValue accumulate_gradients(const ModelParams<Scalar>& p, std::span<const int> source,
                               std::span<const int> target, Scalar scale, ModelParams<Scalar>& grad) {
  if (target.empty()) throw ModelError("empty target sequence");
  check_ids(target, p.dims.target_vocab);
  const int H = p.dims.hidden;
  const int E = p.dims.embed;
  const int A = p.dims.annotation();

  EncoderCache<Scalar> enc;
  const auto src = prepare_source(p, encode(p, source, &enc));
  const auto T = src.annotations.cols();

  const Vector<Scalar> init_pre = p.init_weight * src.annotations.col(0).tail(H) + p.init_bias;
  Vector<Scalar> state = init_pre.array().tanh().matrix();
  const Vector<Scalar> state0 = state;

  std::vector<DecoderStepCache<Scalar>> steps(target.size());
  LossValue loss;
  int prev = kStart;
  for (std::size_t t = 0; t < target.size(); ++t) {
    auto out = decoder_step(p, state, prev, src, &steps[t]);
    loss.nll -= std::log(static_cast<double>(out.probs(target[t])));
    state = std::move(out.state);
    prev = target[t];
  }
  loss.tokens = target.size();

  // Backward through the decoder.
  Matrix<Scalar> d_ann = Matrix<Scalar>::Zero(A, T);
  Vector<Scalar> d_state = Vector<Scalar>::Zero(H);
  for (std::size_t k = target.size(); k-- > 0;) {
    const auto& c = steps[k];
    Vector<Scalar> d_logits = c.probs;
    d_logits(target[k]) -= Scalar(1);
    d_logits *= scale;
    grad.out_weight.noalias() += d_logits * c.readout.transpose();
    grad.out_bias += d_logits;
    const Vector<Scalar> d_readout = p.out_weight.transpose() * d_logits;

    d_state += d_readout.head(H);
    Vector<Scalar> d_embed = d_readout.segment(H, E);
    Vector<Scalar> d_context = d_readout.tail(A);

    auto [d_input, d_prev_state] = gru_backward<Scalar>(p.decoder, c.gru, d_state, grad.decoder);
    d_embed += d_input.head(E);
    d_context += d_input.tail(A);
    grad.target_embed.col(c.prev_token) += d_embed;

    // c = annotations * w; w = softmax(e); e = hidden^T attn_score.
    const auto& att = c.attention;
    d_ann.noalias() += d_context * att.weights.transpose();
    const Vector<Scalar> d_w = src.annotations.transpose() * d_context;
    const Vector<Scalar> d_e = att.weights.cwiseProduct((d_w.array() - att.weights.dot(d_w)).matrix());
    grad.attn_score.noalias() += att.hidden * d_e;
    const Matrix<Scalar> d_pre =
        (p.attn_score * d_e.transpose()).cwiseProduct((Scalar(1) - att.hidden.array().square()).matrix());
    const Vector<Scalar> d_query = d_pre.rowwise().sum();
    grad.attn_key.noalias() += d_pre * src.annotations.transpose();
    d_ann.noalias() += p.attn_key.transpose() * d_pre;
    grad.attn_query.noalias() += d_query * c.prev_state.transpose();
    d_prev_state.noalias() += p.attn_query.transpose() * d_query;

    d_state = std::move(d_prev_state);
  }

  // Decoder initial state.
  const Vector<Scalar> d_init_pre = d_state.cwiseProduct((Scalar(1) - state0.array().square()).matrix());
  grad.init_weight.noalias() += d_init_pre * src.annotations.col(0).tail(H).transpose();
  grad.init_bias += d_init_pre;
  d_ann.col(0).tail(H) += p.init_weight.transpose() * d_init_pre;

  // Backward through both encoder chains.
  Vector<Scalar> carry = Vector<Scalar>::Zero(H);
  for (Eigen::Index i = T - 1; i >= 0; --i) {
    const Vector<Scalar> dh = d_ann.col(i).head(H) + carry;
    auto [dx, dprev] = gru_backward<Scalar>(p.encoder_fwd, enc.fwd[i], dh, grad.encoder_fwd);
    grad.source_embed.col(enc.source[i]) += dx;
    carry = std::move(dprev);
  }
  carry.setZero();
  for (Eigen::Index i = 0; i < T; ++i) {
    const Vector<Scalar> dh = d_ann.col(i).tail(H) + carry;
    auto [dx, dprev] = gru_backward<Scalar>(p.encoder_bwd, enc.bwd[i], dh, grad.encoder_bwd);
    grad.source_embed.col(enc.source[i]) += dx;
    carry = std::move(dprev);
  }
  return loss;
}

// --- Batches --------------------------------------------------------------------

/// Column-per-sequence id matrices padded with PAD; masks mark real tokens.
struct Batch {
  Eigen::MatrixXi source;  // max_src_len x batch
  Eigen::MatrixXi target;  // max_tgt_len x batch
  Eigen::MatrixXi source_mask, target_mask;

  Eigen::Index size() const { return source.cols(); }

  /// Unpadded sequence j.
  std::vector<int> source_seq(Eigen::Index j) const { return unpad(source, source_mask, j); }
  std::vector<int> target_seq(Eigen::Index j) const { return unpad(target, target_mask, j); }

private:
  static std::vector<int> unpad(const Eigen::MatrixXi& ids, const Eigen::MatrixXi& mask, Eigen::Index j) {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < ids.rows(); ++i)
      if (mask(i, j)) out.push_back(ids(i, j));
    return out;
  }
};

/// Sequences must already carry their trailing EOS. extra_padding appends
/// that many PAD rows beyond the longest sequence.
inline Batch make_batch(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
                        int extra_padding = 0) {
  std::size_t ms = 0, mt = 0;
  for (const auto& [s, t] : pairs) {
    ms = std::max(ms, s.size());
    mt = std::max(mt, t.size());
  }
  const auto B = static_cast<Eigen::Index>(pairs.size());
  const auto rs = static_cast<Eigen::Index>(ms) + extra_padding;
  const auto rt = static_cast<Eigen::Index>(mt) + extra_padding;
  Batch b;
  b.source = Eigen::MatrixXi::Constant(rs, B, kPad);
  b.target = Eigen::MatrixXi::Constant(rt, B, kPad);
  b.source_mask = Eigen::MatrixXi::Zero(rs, B);
  b.target_mask = Eigen::MatrixXi::Zero(rt, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& [s, t] = pairs[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < s.size(); ++i) {
      b.source(static_cast<Eigen::Index>(i), j) = s[i];
      b.source_mask(static_cast<Eigen::Index>(i), j) = 1;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      b.target(static_cast<Eigen::Index>(i), j) = t[i];
      b.target_mask(static_cast<Eigen::Index>(i), j) = 1;
    }
  }
  return b;
}

template <typename Scalar>
struct BatchGradient {
  ModelParams<Scalar> grad;
  double mean_loss = 0.0;  // mean per-sequence negative log-likelihood
  std::size_t tokens = 0;
};

/// Mean per-sequence loss over the batch; padded positions are masked out of
/// the loss and the attention.
template <typename Scalar>
double batch_loss(const ModelParams<Scalar>& p, const Batch& batch) {
  if (batch.size() == 0) throw ModelError("empty batch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    const auto s = batch.source_seq(j);
    const auto t = batch.target_seq(j);
    total += sequence_loss<Scalar>(p, s, t).nll;
  }
  return total / static_cast<double>(batch.size());
}

/// Exact gradient of batch_loss.
template <typename Scalar>
BatchGradient<Scalar> gradients(const ModelParams<Scalar>& p, const Batch& batch) {
  if (batch.size() == 0) throw ModelError("empty batch");
  BatchGradient<Scalar> out{ModelParams<Scalar>(p.dims), 0.0, 0};
  const Scalar scale = Scalar(1) / static_cast<Scalar>(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    const auto s = batch.source_seq(j);
    const auto t = batch.target_seq(j);
    const auto l = accumulate_gradients<Scalar>(p, s, t, scale, out.grad);
    out.mean_loss += l.nll;
    out.tokens += l.tokens;
  }
  out.mean_loss /= static_cast<double>(batch.size());
  return out;
}

/// ids followed by EOS.
inline std::vector<int> with_eos(std::vector<int> ids) {
  ids.push_back(kEos);
  return ids;
}

}  // namespace cmg::nmt
