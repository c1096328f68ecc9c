#include "xsrank/context_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xsrank {

namespace {

nk::Tensor uniform_matrix(std::size_t r, std::size_t c, nk::Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
  std::vector<double> v(r * c);
  for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return nk::Tensor::matrix(r, c, std::move(v));
}

}  // namespace

nk::Tensor positional_encoding(std::size_t m, std::size_t d) {
  if (m == 0 || d == 0) throw ShapeError("positional encoding needs positive dimensions");
  if (d % 2 != 0) throw ConfigError("positional encoding width must be even, got " + std::to_string(d));
  auto pe = nk::Tensor::zeros({m, d});
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(p, 2 * i) = std::sin(angle);
      pe(p, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

nk::Tensor scaled_dot_attention(const nk::Tensor& q, const nk::Tensor& k, const nk::Tensor& v) {
  if (q.cols() != k.cols()) throw ShapeError("attention: query and key widths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value lengths differ");
  auto scores = nk::matmul(q, nk::transpose(k));
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (auto& x : scores.values()) x *= s;
  return nk::matmul(nk::softmax(scores), v);
}

nk::Var scaled_dot_attention(nk::Var q, nk::Var k, nk::Var v) {
  if (q.value().cols() != k.value().cols()) throw ShapeError("attention: query and key widths differ");
  const double s = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
  const auto scores = nk::scale(nk::matmul(q, nk::transpose(k)), s);
  return nk::matmul(nk::softmax_rows(scores), v);
}

void EncoderSpec::validate() const {
  if (d_model == 0 || d_ff == 0 || n_layers == 0 || n_heads == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by the number of heads");
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for positional encoding");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (loss == LossKind::Mse) throw ConfigError("context model needs a ranking loss");
}

EncoderParams EncoderParams::init(const EncoderSpec& spec, std::size_t input_width, nk::Rng rng) {
  spec.validate();
  EncoderParams p;
  p.input_width = input_width;
  p.d_model = spec.d_model;
  p.d_ff = spec.d_ff;
  p.n_heads = spec.n_heads;
  p.dropout_rate = spec.dropout_rate;
  const std::size_t d = spec.d_model;
  p.in_w = uniform_matrix(input_width, d, rng);
  p.in_b = nk::Tensor::zeros({d});
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    EncoderLayer layer;
    layer.wq = uniform_matrix(d, d, rng);
    layer.wk = uniform_matrix(d, d, rng);
    layer.wv = uniform_matrix(d, d, rng);
    layer.wo = uniform_matrix(d, d, rng);
    layer.ln1_gain = nk::Tensor::filled({d}, 1.0);
    layer.ln1_bias = nk::Tensor::zeros({d});
    layer.ff_w1 = uniform_matrix(d, spec.d_ff, rng);
    layer.ff_b1 = nk::Tensor::zeros({spec.d_ff});
    layer.ff_w2 = uniform_matrix(spec.d_ff, d, rng);
    layer.ff_b2 = nk::Tensor::zeros({d});
    layer.ln2_gain = nk::Tensor::filled({d}, 1.0);
    layer.ln2_bias = nk::Tensor::zeros({d});
    p.layers.push_back(std::move(layer));
  }
  p.out_w = uniform_matrix(d, 1, rng);
  p.out_b = nk::Tensor::zeros({1});
  return p;
}

std::vector<nk::Tensor*> EncoderParams::tensors() {
  std::vector<nk::Tensor*> out{&in_w, &in_b};
  for (auto& l : layers) {
    for (auto* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ln1_gain, &l.ln1_bias, &l.ff_w1, &l.ff_b1, &l.ff_w2, &l.ff_b2,
                    &l.ln2_gain, &l.ln2_bias})
      out.push_back(t);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const nk::Tensor*> EncoderParams::tensors() const {
  auto mut = const_cast<EncoderParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

EncoderVars bind(nk::Tape& tape, const EncoderParams& params) {
  EncoderVars v;
  auto leaf = [&](const nk::Tensor& t) {
    auto x = tape.leaf(t);
    v.all.push_back(x);
    return x;
  };
  v.in_w = leaf(params.in_w);
  v.in_b = leaf(params.in_b);
  for (const auto& l : params.layers) {
    LayerVars lv;
    lv.wq = leaf(l.wq);
    lv.wk = leaf(l.wk);
    lv.wv = leaf(l.wv);
    lv.wo = leaf(l.wo);
    lv.ln1_gain = leaf(l.ln1_gain);
    lv.ln1_bias = leaf(l.ln1_bias);
    lv.ff_w1 = leaf(l.ff_w1);
    lv.ff_b1 = leaf(l.ff_b1);
    lv.ff_w2 = leaf(l.ff_w2);
    lv.ff_b2 = leaf(l.ff_b2);
    lv.ln2_gain = leaf(l.ln2_gain);
    lv.ln2_bias = leaf(l.ln2_bias);
    v.layers.push_back(lv);
  }
  v.out_w = leaf(params.out_w);
  v.out_b = leaf(params.out_b);
  return v;
}

nk::Var multi_head_attention(nk::Var x, const LayerVars& p, std::size_t n_heads) {
  const std::size_t d = x.value().cols();
  if (n_heads == 0 || d % n_heads != 0) throw ConfigError("attention: width not divisible by head count");
  const auto q = nk::matmul(x, p.wq);
  const auto k = nk::matmul(x, p.wk);
  const auto v = nk::matmul(x, p.wv);
  if (n_heads == 1) return nk::matmul(scaled_dot_attention(q, k, v), p.wo);
  const std::size_t dh = d / n_heads;
  std::vector<nk::Var> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    heads.push_back(scaled_dot_attention(nk::slice_cols(q, h * dh, dh), nk::slice_cols(k, h * dh, dh),
                                         nk::slice_cols(v, h * dh, dh)));
  }
  return nk::matmul(nk::concat_cols(heads), p.wo);
}

nk::Var encoder_block(nk::Var x, const LayerVars& p, std::size_t n_heads, double dropout_rate, nk::Rng& rng,
                      bool training) {
  const auto att = nk::dropout(multi_head_attention(x, p, n_heads), dropout_rate, rng, training);
  const auto z = nk::layer_norm_rows(nk::add(x, att), p.ln1_gain, p.ln1_bias);
  auto ff = nk::relu(nk::add_row_bias(nk::matmul(z, p.ff_w1), p.ff_b1));
  ff = nk::add_row_bias(nk::matmul(ff, p.ff_w2), p.ff_b2);
  ff = nk::dropout(ff, dropout_rate, rng, training);
  return nk::layer_norm_rows(nk::add(z, ff), p.ln2_gain, p.ln2_bias);
}

nk::Tensor ContextSublist::features() const {
  if (items.empty()) throw UsageError("empty context sublist");
  std::vector<double> v;
  v.reserve(items.size() * kFeatureCount);
  for (const auto& it : items) v.insert(v.end(), it.x.begin(), it.x.end());
  return nk::Tensor::matrix(items.size(), kFeatureCount, std::move(v));
}

std::vector<double> ContextSublist::relevance() const {
  std::vector<double> r(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    r[i] = side == Side::Long ? items[i].label : 9.0 - items[i].label;
  return r;
}

std::pair<ContextSublist, ContextSublist> make_sublists(std::span<const FeatureRow> rows,
                                                        std::span<const double> base_scores, std::size_t m,
                                                        const ZScore& zscore) {
  const std::size_t n = rows.size();
  if (base_scores.size() != n) throw ShapeError("one base score per row required");
  if (m == 0 || m > n) throw UsageError("sublist length must lie in [1, cross-section size]");
  std::vector<std::size_t> order(n), lowest(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  lowest = order;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return base_scores[a] > base_scores[b]; });
  std::stable_sort(lowest.begin(), lowest.end(),
                   [&](std::size_t a, std::size_t b) { return base_scores[a] < base_scores[b]; });

  auto item = [&](std::size_t row, std::size_t pos) {
    ContextItem it;
    it.asset = rows[row].asset;
    it.position = pos;
    it.row = row;
    it.x = zscore.apply(rows[row].x);
    it.label = rows[row].label;
    return it;
  };
  ContextSublist lo, sh;
  lo.side = Side::Long;
  sh.side = Side::Short;
  lo.date = sh.date = rows.front().date;
  for (std::size_t p = 0; p < m; ++p) {
    lo.items.push_back(item(order[p], p));
    sh.items.push_back(item(lowest[p], p));
  }
  return {std::move(lo), std::move(sh)};
}

nk::Var encoder_forward(const EncoderParams& params, const EncoderVars& vars, const nk::Tensor& x,
                        double dropout_rate, nk::Rng& rng, bool training) {
  if (x.cols() != params.input_width) throw ModelError("sublist feature width does not match the input projection");
  nk::Tape& tape = *vars.in_w.tape();
  auto h = nk::add_row_bias(nk::matmul(tape.constant(x), vars.in_w), vars.in_b);
  if (params.positional) h = nk::add_constant(h, positional_encoding(x.rows(), params.d_model));
  for (const auto& layer : vars.layers) h = encoder_block(h, layer, params.n_heads, dropout_rate, rng, training);
  return nk::add_row_bias(nk::matmul(h, vars.out_w), vars.out_b);
}

std::vector<double> rerank(const EncoderParams& params, const ContextSublist& sublist) {
  nk::Rng unused(0);
  return rerank(params, sublist, false, unused);
}

std::vector<double> rerank(const EncoderParams& params, const ContextSublist& sublist, bool training, nk::Rng& rng) {
  nk::Tape tape;
  const auto vars = bind(tape, params);
  const auto out = encoder_forward(params, vars, sublist.features(), params.dropout_rate, rng, training);
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

}  // namespace xsrank
