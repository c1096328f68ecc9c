#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "xsrank/context_transformer.hpp"

using namespace xsrank;
using nk::Tensor;
using xsrank::testing::max_relative_error;
using xsrank::testing::numeric_gradient;
using xsrank::testing::random_matrix;
using xsrank::testing::attention_ref;
using xsrank::testing::mha_ref;

namespace {

EncoderSpec small_spec(std::size_t d, std::size_t ff, std::size_t layers, std::size_t heads = 1) {
  EncoderSpec s;
  s.d_model = d;
  s.d_ff = ff;
  s.n_layers = layers;
  s.n_heads = heads;
  return s;
}

ContextSublist random_sublist(nk::Rng& r, std::size_t m, Side side = Side::Long) {
  ContextSublist s;
  s.side = side;
  for (std::size_t i = 0; i < m; ++i) {
    ContextItem it;
    it.asset = i;
    it.position = i;
    it.row = i;
    for (auto& v : it.x) v = r.normal();
    it.label = static_cast<int>(r.below(10));
    s.items.push_back(it);
  }
  return s;
}

EncoderParams with_tensors(EncoderParams p, const std::vector<Tensor>& at) {
  auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = at[i];
  return p;
}

std::vector<Tensor> tensor_values(const EncoderParams& p) {
  std::vector<Tensor> out;
  for (const auto* t : p.tensors()) out.push_back(*t);
  return out;
}

// Loss of the full pipeline (projection, encodings, blocks, head, loss) on a fresh tape.
double pipeline_loss(const EncoderParams& p, const ContextSublist& s, LossKind kind, nk::Tape& tape,
                     EncoderVars& vars) {
  vars = bind(tape, p);
  nk::Rng unused(0);
  const auto scores = encoder_forward(p, vars, s.features(), 0.0, unused, false);
  const auto loss = loss_on_tape(kind, scores, s.relevance());
  tape.backward(loss);
  return loss.value()[0];
}

}  // namespace

TEST(PositionalEncoding, ClosedForms) {
  const auto pe = positional_encoding(5, 8);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(pe(0, c), c % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(pe(3, 5), std::cos(3.0 / std::pow(10000.0, 4.0 / 8.0)), 1e-15);
  for (double v : positional_encoding(40, 16).values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(positional_encoding(3, 5), ConfigError);
}

TEST(Attention, MatchesLoopReference) {
  nk::Rng r(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + r.below(6), d = 1 + r.below(6), dv = 1 + r.below(5);
    const auto q = random_matrix(r, m, d), k = random_matrix(r, m, d), v = random_matrix(r, m, dv);
    const auto got = scaled_dot_attention(q, k, v);
    const auto want = attention_ref(q, k, v);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    nk::Tape tape;
    const auto on_tape = scaled_dot_attention(tape.leaf(q), tape.leaf(k), tape.leaf(v));
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(on_tape.value()[i], want[i], 1e-12);
  }
}

TEST(Attention, DegenerateCases) {
  nk::Rng r(2);
  const auto v1 = random_matrix(r, 1, 4);
  EXPECT_EQ(scaled_dot_attention(random_matrix(r, 1, 3), random_matrix(r, 1, 3), v1), v1);

  // Identical query rows and identical key rows: uniform weights.
  const auto qrow = random_matrix(r, 1, 3), krow = random_matrix(r, 1, 3);
  std::vector<double> qv, kv;
  for (int i = 0; i < 4; ++i) {
    qv.insert(qv.end(), qrow.values().begin(), qrow.values().end());
    kv.insert(kv.end(), krow.values().begin(), krow.values().end());
  }
  const auto v = random_matrix(r, 4, 2);
  const auto out = scaled_dot_attention(Tensor::matrix(4, 3, qv), Tensor::matrix(4, 3, kv), v);
  for (std::size_t c = 0; c < 2; ++c) {
    const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4.0;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out(i, c), mean, 1e-15);
  }
  EXPECT_THROW(scaled_dot_attention(random_matrix(r, 2, 3), random_matrix(r, 2, 4), random_matrix(r, 2, 3)),
               ShapeError);
}

TEST(MultiHead, IdentityProjectionReducesExactly) {
  nk::Rng r(3);
  auto p = EncoderParams::init(small_spec(6, 8, 1), kFeatureCount, r);
  auto& layer = p.layers[0];
  auto eye = Tensor::zeros({6, 6});
  for (std::size_t i = 0; i < 6; ++i) eye(i, i) = 1.0;
  layer.wq = layer.wk = layer.wv = layer.wo = eye;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_matrix(r, 5, 6);
    nk::Tape tape;
    const auto vars = bind(tape, p);
    const auto got = multi_head_attention(tape.constant(x), vars.layers[0], 1);
    EXPECT_EQ(got.value(), scaled_dot_attention(x, x, x));
  }
}

TEST(MultiHead, MatchesPerHeadReference) {
  nk::Rng r(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t heads = 1 + r.below(3);
    const std::size_t d = 2 * heads * (1 + r.below(2));
    const auto p = EncoderParams::init(small_spec(d, 4, 1, heads), kFeatureCount, r.split(trial));
    const auto x = random_matrix(r, 1 + r.below(5), d);
    nk::Tape tape;
    const auto vars = bind(tape, p);
    const auto got = multi_head_attention(tape.constant(x), vars.layers[0], heads);
    const auto want = mha_ref(x, p.layers[0], heads);
    ASSERT_EQ(got.value().shape(), x.shape());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.value()[i], want[i], 1e-12);
  }
  EncoderSpec bad = small_spec(6, 4, 1, 4);
  EXPECT_THROW(bad.validate(), ConfigError);
  nk::Rng r2(5);
  const auto p = EncoderParams::init(small_spec(6, 4, 1), kFeatureCount, r2);
  nk::Tape tape;
  const auto vars = bind(tape, p);
  EXPECT_THROW(multi_head_attention(tape.constant(random_matrix(r2, 3, 6)), vars.layers[0], 4), ConfigError);
}

TEST(EncoderBlock, ZeroedSublayersGiveDoubleLayerNorm) {
  nk::Rng r(6);
  auto p = EncoderParams::init(small_spec(6, 8, 1), kFeatureCount, r);
  auto& l = p.layers[0];
  for (Tensor* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ff_w1, &l.ff_b1, &l.ff_w2, &l.ff_b2})
    *t = Tensor::zeros(t->shape());
  const auto x = random_matrix(r, 4, 6);
  nk::Tape tape;
  const auto vars = bind(tape, p);
  nk::Rng unused(0);
  const auto out = encoder_block(tape.constant(x), vars.layers[0], 1, 0.0, unused, false);
  const auto ones = Tensor::filled({6}, 1.0), zeros = Tensor::zeros({6});
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> row(x.row(i).begin(), x.row(i).end());
    const auto want = nk::layer_norm(nk::layer_norm(Tensor::vector(row), ones, zeros), ones, zeros);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out.value()(i, c), want[c], 1e-12);
  }
}

TEST(EncoderBlock, PermutationEquivariant) {
  nk::Rng r(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = EncoderParams::init(small_spec(8, 12, 1, 2), kFeatureCount, r.split(trial));
    const auto x = random_matrix(r, 6, 8);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), r);
    std::vector<double> xp;
    for (auto i : perm) xp.insert(xp.end(), x.row(i).begin(), x.row(i).end());
    nk::Tape tape;
    const auto vars = bind(tape, p);
    nk::Rng unused(0);
    const auto a = encoder_block(tape.constant(x), vars.layers[0], 2, 0.0, unused, false).value();
    const auto b = encoder_block(tape.constant(Tensor::matrix(6, 8, xp)), vars.layers[0], 2, 0.0, unused, false).value();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(b(i, c), a(perm[i], c), 1e-9);
  }
}

TEST(Rerank, SingleItemAndEmpty) {
  nk::Rng r(8);
  const auto p = EncoderParams::init(small_spec(8, 8, 2), kFeatureCount, r);
  const auto s = rerank(p, random_sublist(r, 1));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(std::isfinite(s[0]));
  EXPECT_THROW(rerank(p, ContextSublist{}), UsageError);
}

TEST(Rerank, EvaluationIsDeterministicAndTrainingUsesDropout) {
  nk::Rng r(9);
  auto spec = small_spec(8, 8, 2);
  spec.dropout_rate = 0.5;
  const auto p = EncoderParams::init(spec, kFeatureCount, r);
  const auto sub = random_sublist(r, 10);
  EXPECT_EQ(rerank(p, sub), rerank(p, sub));
  nk::Rng d1(1), d2(1), d3(2);
  const auto t1 = rerank(p, sub, true, d1);
  EXPECT_EQ(t1, rerank(p, sub, true, d2));
  EXPECT_NE(t1, rerank(p, sub, true, d3));
  EXPECT_NE(t1, rerank(p, sub));
}

TEST(Rerank, PositionalSensitivityAndEquivariance) {
  nk::Rng r(10);
  int sensitive = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = EncoderParams::init(small_spec(8, 16, 2), kFeatureCount, r.split(trial));
    const auto sub = random_sublist(r, 10);
    auto swapped = sub;
    std::swap(swapped.items[2].x, swapped.items[7].x);

    const auto a = rerank(p, sub), b = rerank(p, swapped);
    // With encodings: moving features to other positions changes their scores.
    if (std::abs(a[2] - b[7]) > 1e-9 || std::abs(a[7] - b[2]) > 1e-9) ++sensitive;

    p.positional = false;
    const auto c = rerank(p, sub), d = rerank(p, swapped);
    for (std::size_t i = 0; i < 10; ++i) {
      const std::size_t j = i == 2 ? 7 : i == 7 ? 2 : i;
      EXPECT_NEAR(c[i], d[j], 1e-9);
    }
  }
  EXPECT_EQ(sensitive, 10);
}

TEST(Rerank, FullPipelineGradient) {
  nk::Rng r(11);
  const LossKind kinds[] = {LossKind::Pairwise, LossKind::ListNet, LossKind::ListMle};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + r.below(3);                // 2..4
    const std::size_t d = 2 * (1 + r.below(4));          // 2..8
    const std::size_t layers = 1 + r.below(2);           // 1..2
    const std::size_t heads = d % 2 == 0 && r.below(2) ? 2 : 1;
    auto p = EncoderParams::init(small_spec(d, 2 + r.below(6), layers, heads), kFeatureCount, r.split(trial));
    // Non-trivial layer-norm parameters.
    for (auto& l : p.layers)
      for (Tensor* t : {&l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias, &l.ff_b1})
        for (auto& v : t->values()) v += 0.2 * r.normal();
    const auto sub = random_sublist(r, m, r.below(2) ? Side::Long : Side::Short);
    const auto kind = kinds[trial % 3];

    nk::Tape tape;
    EncoderVars vars;
    pipeline_loss(p, sub, kind, tape, vars);
    const auto analytic = tape.gradients(vars.all);
    auto f = [&](const std::vector<Tensor>& at) {
      nk::Tape t2;
      EncoderVars v2;
      return pipeline_loss(with_tensors(p, at), sub, kind, t2, v2);
    };
    const auto numeric = numeric_gradient(f, tensor_values(p), 1e-5);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Sublists, OrderingAndRelevance) {
  std::vector<FeatureRow> rows(12);
  std::vector<double> scores(12);
  for (std::size_t i = 0; i < 12; ++i) {
    rows[i].date = 3;
    rows[i].asset = 20 + i;
    rows[i].label = static_cast<int>(i % 10);
    rows[i].x.fill(static_cast<double>(i));
    scores[i] = static_cast<double>((i * 5) % 12);
  }
  scores[4] = scores[9];  // tie: lower row index ranks first
  const auto [lo, sh] = make_sublists(rows, scores, 4, ZScore::identity());
  std::vector<std::size_t> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(lo.items[p].row, order[p]);
    EXPECT_EQ(lo.items[p].position, p);
    EXPECT_EQ(sh.items[p].row, order[11 - p]);
    EXPECT_EQ(sh.items[p].position, p);
    EXPECT_EQ(lo.relevance()[p], rows[order[p]].label);
    EXPECT_EQ(sh.relevance()[p], 9.0 - rows[order[11 - p]].label);
    EXPECT_EQ(lo.items[p].asset, rows[order[p]].asset);
  }
  EXPECT_EQ(lo.date, 3u);
  EXPECT_EQ(sh.side, Side::Short);
  EXPECT_THROW(make_sublists(rows, scores, 13, ZScore::identity()), UsageError);
  EXPECT_THROW(make_sublists(rows, scores, 0, ZScore::identity()), UsageError);
}

TEST(EncoderSpec, Validation) {
  EncoderSpec s;
  EXPECT_NO_THROW(s.validate());
  s.loss = LossKind::Mse;
  EXPECT_THROW(s.validate(), ConfigError);
  s = EncoderSpec{};
  s.d_model = 7;
  EXPECT_THROW(s.validate(), ConfigError);
  s = EncoderSpec{};
  s.dropout_rate = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(EncoderParams, TensorOrderIsStable) {
  nk::Rng r(12);
  auto p = EncoderParams::init(small_spec(8, 4, 3), kFeatureCount, r);
  const auto ts = p.tensors();
  EXPECT_EQ(ts.size(), 4u + 3u * 12u);
  EXPECT_EQ(ts.front(), &p.in_w);
  EXPECT_EQ(ts.back(), &p.out_b);
  nk::Tape tape;
  const auto vars = bind(tape, p);
  ASSERT_EQ(vars.all.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(vars.all[i].value(), *ts[i]);
}
