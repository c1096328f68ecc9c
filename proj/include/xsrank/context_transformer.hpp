#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xsrank/features.hpp"
#include "xsrank/numkernel.hpp"
#include "xsrank/rankers.hpp"
#include "xsrank/side.hpp"

namespace xsrank {

/// Sinusoidal position table of shape m x d; d must be even.
/// PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(p / 10000^(2i/d)).
nk::Tensor positional_encoding(std::size_t m, std::size_t d);

/// softmax(Q K^T / sqrt(d_k)) V, with d_k the column count of Q.
nk::Tensor scaled_dot_attention(const nk::Tensor& q, const nk::Tensor& k, const nk::Tensor& v);
nk::Var scaled_dot_attention(nk::Var q, nk::Var k, nk::Var v);

struct EncoderSpec {
  std::size_t d_model = 16;  // width of the projected input (d_fc)
  std::size_t d_ff = 16;
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;
  double dropout_rate = 0.0;
  double learning_rate = 1e-3;
  LossKind loss = LossKind::ListNet;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EncoderLayer {
  nk::Tensor wq, wk, wv, wo;           // d x d, no biases
  nk::Tensor ln1_gain, ln1_bias;       // d
  nk::Tensor ff_w1, ff_b1;             // d x d_ff, d_ff
  nk::Tensor ff_w2, ff_b2;             // d_ff x d, d
  nk::Tensor ln2_gain, ln2_bias;       // d
};

struct EncoderParams {
  std::size_t input_width = kFeatureCount;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_heads = 1;
  double dropout_rate = 0.0;
  bool positional = true;  // false zeroes the position table
  nk::Tensor in_w, in_b;   // input_width x d, d
  std::vector<EncoderLayer> layers;
  nk::Tensor out_w, out_b;  // d x 1, 1

  static EncoderParams init(const EncoderSpec& spec, std::size_t input_width, nk::Rng rng);

  /// Every tensor in a fixed order (used for optimisation and persistence).
  std::vector<nk::Tensor*> tensors();
  std::vector<const nk::Tensor*> tensors() const;
};

struct LayerVars {
  nk::Var wq, wk, wv, wo, ln1_gain, ln1_bias, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gain, ln2_bias;
};

struct EncoderVars {
  nk::Var in_w, in_b, out_w, out_b;
  std::vector<LayerVars> layers;
  std::vector<nk::Var> all;  // same order as EncoderParams::tensors()
};

EncoderVars bind(nk::Tape& tape, const EncoderParams& params);

/// Projections, per-head attention on column slices, concatenation, output map.
nk::Var multi_head_attention(nk::Var x, const LayerVars& p, std::size_t n_heads);

/// z = LN(x + Drop(MHA(x))); out = LN(z + Drop(FF(z))).
nk::Var encoder_block(nk::Var x, const LayerVars& p, std::size_t n_heads, double dropout_rate, nk::Rng& rng,
                      bool training);

/// One scored sublist of length m taken from a base ranking.
struct ContextItem {
  std::size_t asset = 0;     // asset index
  std::size_t position = 0;  // base position 0..m-1, 0 = most extreme
  std::size_t row = 0;       // index within the date's cross-section
  FeatureVector x{};         // z-scored features
  int label = 0;
};

struct ContextSublist {
  Side side = Side::Long;
  std::size_t date = 0;
  std::vector<ContextItem> items;  // long: descending base score; short: ascending

  nk::Tensor features() const;
  /// label on the long side, 9 - label on the short side.
  std::vector<double> relevance() const;
};

/// Top-m (long) and bottom-m (short) sublists from base scores; ties are
/// broken by row index.
std::pair<ContextSublist, ContextSublist> make_sublists(std::span<const FeatureRow> rows,
                                                        std::span<const double> base_scores, std::size_t m,
                                                        const ZScore& zscore);

/// n x 1 scores on a tape.
nk::Var encoder_forward(const EncoderParams& params, const EncoderVars& vars, const nk::Tensor& x,
                        double dropout_rate, nk::Rng& rng, bool training);

/// Evaluation-mode re-ranking scores for a sublist (higher = stronger position).
std::vector<double> rerank(const EncoderParams& params, const ContextSublist& sublist);
/// Training-mode variant; dropout draws come from `rng`.
std::vector<double> rerank(const EncoderParams& params, const ContextSublist& sublist, bool training, nk::Rng& rng);

}  // namespace xsrank
