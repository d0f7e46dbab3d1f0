#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cmg/rng.hpp"

namespace cmg::nmt {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Thrown on shape mismatches and invalid model inputs.
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ModelDims {
  int embed = 64;
  int hidden = 128;
  int source_vocab = 0;
  int target_vocab = 0;

  int annotation() const { return 2 * hidden; }
  /// Decoder readout input: [state; previous embedding; context].
  int readout() const { return hidden + embed + annotation(); }

  bool operator==(const ModelDims&) const = default;
};

/// Gated recurrent unit:
///   z = sigmoid(wz x + uz h + bz)
///   r = sigmoid(wr x + ur h + br)
///   c = tanh(wh x + uh (r .* h) + bh)
///   h' = (1 - z) .* h + z .* c
template <typename Scalar>
struct GruParams {
  Matrix<Scalar> wz, wr, wh;  // hidden x input
  Matrix<Scalar> uz, ur, uh;  // hidden x hidden
  Vector<Scalar> bz, br, bh;

  GruParams() = default;
  GruParams(int input, int hidden)
      : wz(Matrix<Scalar>::Zero(hidden, input)),
        wr(Matrix<Scalar>::Zero(hidden, input)),
        wh(Matrix<Scalar>::Zero(hidden, input)),
        uz(Matrix<Scalar>::Zero(hidden, hidden)),
        ur(Matrix<Scalar>::Zero(hidden, hidden)),
        uh(Matrix<Scalar>::Zero(hidden, hidden)),
        bz(Vector<Scalar>::Zero(hidden)),
        br(Vector<Scalar>::Zero(hidden)),
        bh(Vector<Scalar>::Zero(hidden)) {}

  int input_dim() const { return static_cast<int>(wz.cols()); }
  int hidden_dim() const { return static_cast<int>(wz.rows()); }

  /// Calls f(name, t...) with the same tensor drawn from each parameter set.
  template <typename F, typename... P>
  static void zip(F&& f, const std::string& prefix, P&... p) {
    f(prefix + "wz", p.wz...);
    f(prefix + "wr", p.wr...);
    f(prefix + "wh", p.wh...);
    f(prefix + "uz", p.uz...);
    f(prefix + "ur", p.ur...);
    f(prefix + "uh", p.uh...);
    f(prefix + "bz", p.bz...);
    f(prefix + "br", p.br...);
    f(prefix + "bh", p.bh...);
  }
};

/// Every trainable tensor of the attentional encoder-decoder.
/// Embedding tables store one column per token.
template <typename Scalar>
struct ModelParams {
  ModelDims dims;

  Matrix<Scalar> source_embed;  // embed x |V_src|
  Matrix<Scalar> target_embed;  // embed x |V_tgt|
  GruParams<Scalar> encoder_fwd, encoder_bwd;
  GruParams<Scalar> decoder;    // input: [prev embedding; context]

  Matrix<Scalar> attn_query;    // hidden x hidden, applied to the previous decoder state
  Matrix<Scalar> attn_key;      // hidden x 2*hidden, applied to each annotation
  Vector<Scalar> attn_score;    // hidden

  Matrix<Scalar> init_weight;   // hidden x hidden, over the first backward encoder state
  Vector<Scalar> init_bias;

  Matrix<Scalar> out_weight;    // |V_tgt| x readout
  Vector<Scalar> out_bias;

  ModelParams() = default;
  explicit ModelParams(const ModelDims& d)
      : dims(d),
        source_embed(Matrix<Scalar>::Zero(d.embed, d.source_vocab)),
        target_embed(Matrix<Scalar>::Zero(d.embed, d.target_vocab)),
        encoder_fwd(d.embed, d.hidden),
        encoder_bwd(d.embed, d.hidden),
        decoder(d.embed + d.annotation(), d.hidden),
        attn_query(Matrix<Scalar>::Zero(d.hidden, d.hidden)),
        attn_key(Matrix<Scalar>::Zero(d.hidden, d.annotation())),
        attn_score(Vector<Scalar>::Zero(d.hidden)),
        init_weight(Matrix<Scalar>::Zero(d.hidden, d.hidden)),
        init_bias(Vector<Scalar>::Zero(d.hidden)),
        out_weight(Matrix<Scalar>::Zero(d.target_vocab, d.readout())),
        out_bias(Vector<Scalar>::Zero(d.target_vocab)) {
    if (d.embed < 1 || d.hidden < 1 || d.source_vocab < 1 || d.target_vocab < 1)
      throw ModelError("model dimensions must be positive");
  }

  template <typename F, typename... P>
  static void zip(F&& f, P&... p) {
    f(std::string("source_embed"), p.source_embed...);
    f(std::string("target_embed"), p.target_embed...);
    GruParams<Scalar>::zip(f, "encoder_fwd.", p.encoder_fwd...);
    GruParams<Scalar>::zip(f, "encoder_bwd.", p.encoder_bwd...);
    GruParams<Scalar>::zip(f, "decoder.", p.decoder...);
    f(std::string("attn_query"), p.attn_query...);
    f(std::string("attn_key"), p.attn_key...);
    f(std::string("attn_score"), p.attn_score...);
    f(std::string("init_weight"), p.init_weight...);
    f(std::string("init_bias"), p.init_bias...);
    f(std::string("out_weight"), p.out_weight...);
    f(std::string("out_bias"), p.out_bias...);
  }

  template <typename F>
  void for_each(F&& f) {
    zip([&](const std::string& name, auto& t) { f(name, t); }, *this);
  }
  template <typename F>
  void for_each(F&& f) const {
    zip([&](const std::string& name, const auto& t) { f(name, t); }, *this);
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  /// Every entry drawn uniformly from [-scale, scale], in tensor order.
  void init_uniform(Rng& rng, double scale) {
    for_each([&](const std::string&, auto& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.uniform(-scale, scale));
    });
  }

  void set_zero() {
    for_each([](const std::string&, auto& t) { t.setZero(); });
  }
};

}  // namespace cmg::nmt
