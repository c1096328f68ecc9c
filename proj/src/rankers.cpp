#include "xsrank/rankers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xsrank {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": label/score length mismatch");
  if (a == 0) throw ShapeError(std::string(what) + ": empty list");
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> log_softmax(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (const double x : v) total += std::exp(x - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

}  // namespace

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Random: return "random";
    case ScorerKind::MacdHeuristic: return "macd";
    case ScorerKind::MlpRegress: return "mlp";
    case ScorerKind::PairwiseNet: return "pairwise";
    case ScorerKind::ListMleNet: return "listmle";
    case ScorerKind::ListNetNet: return "listnet";
  }
  return "unknown";
}

ScorerKind scorer_kind_from_string(std::string_view name) {
  for (const auto k : {ScorerKind::Random, ScorerKind::MacdHeuristic, ScorerKind::MlpRegress, ScorerKind::PairwiseNet,
                       ScorerKind::ListMleNet, ScorerKind::ListNetNet})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown scorer kind '" + std::string(name) + "'");
}

bool is_neural(ScorerKind kind) { return kind != ScorerKind::Random && kind != ScorerKind::MacdHeuristic; }

void ScorerSpec::validate() const {
  if (!is_neural(kind)) return;
  if (hidden_width == 0) throw ConfigError("hidden width must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Pairwise: return "pairwise";
    case LossKind::ListNet: return "listnet";
    case LossKind::ListMle: return "listmle";
    case LossKind::Mse: return "mse";
  }
  return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
  for (const auto k : {LossKind::Pairwise, LossKind::ListNet, LossKind::ListMle, LossKind::Mse})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

LossValue pairwise_logistic_loss(std::span<const double> labels, std::span<const double> scores) {
  require_same_length(labels.size(), scores.size(), "pairwise_logistic_loss");
  const std::size_t n = labels.size();
  LossValue out{0.0, std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!(labels[i] > labels[j])) continue;
      const double z = scores[j] - scores[i];
      out.value += softplus(z);
      const double d = sigmoid(z);
      out.grad[j] += d;
      out.grad[i] -= d;
    }
  return out;
}

LossValue listnet_loss(std::span<const double> labels, std::span<const double> scores) {
  require_same_length(labels.size(), scores.size(), "listnet_loss");
  const auto target = nk::softmax(nk::Tensor::vector({labels.begin(), labels.end()}));
  const auto log_p = log_softmax(scores);
  LossValue out{0.0, std::vector<double>(scores.size())};
  for (std::size_t i = 0; i < scores.size(); ++i) out.value -= target[i] * log_p[i];
  // d/ds_i = softmax(s)_i - softmax(y)_i since the targets sum to one.
  for (std::size_t i = 0; i < scores.size(); ++i) out.grad[i] = std::exp(log_p[i]) - target[i];
  return out;
}

LossValue listmle_loss(std::span<const double> labels, std::span<const double> scores) {
  require_same_length(labels.size(), scores.size(), "listmle_loss");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] > labels[b]; });

  // Suffix log-sum-exp over the permuted scores, accumulated from the tail.
  std::vector<double> lse(n);
  double running = -std::numeric_limits<double>::infinity();
  for (std::size_t k = n; k-- > 0;) {
    const double s = scores[order[k]];
    const double hi = std::max(running, s);
    running = hi + std::log(std::exp(running - hi) + std::exp(s - hi));
    lse[k] = running;
  }
  LossValue out{0.0, std::vector<double>(n, 0.0)};
  for (std::size_t k = 0; k < n; ++k) out.value += lse[k] - scores[order[k]];
  // d/ds_{pi(j)} = sum_{k<=j} exp(s_{pi(j)} - lse_k) - 1
  for (std::size_t j = 0; j < n; ++j) {
    const double s = scores[order[j]];
    double g = -1.0;
    for (std::size_t k = 0; k <= j; ++k) g += std::exp(s - lse[k]);
    out.grad[order[j]] = g;
  }
  return out;
}

LossValue mse_loss(std::span<const double> targets, std::span<const double> scores) {
  require_same_length(targets.size(), scores.size(), "mse_loss");
  const double n = static_cast<double>(targets.size());
  LossValue out{0.0, std::vector<double>(targets.size())};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = scores[i] - targets[i];
    out.value += d * d / n;
    out.grad[i] = 2.0 * d / n;
  }
  return out;
}

LossValue evaluate_loss(LossKind kind, std::span<const double> y, std::span<const double> scores) {
  switch (kind) {
    case LossKind::Pairwise: return pairwise_logistic_loss(y, scores);
    case LossKind::ListNet: return listnet_loss(y, scores);
    case LossKind::ListMle: return listmle_loss(y, scores);
    case LossKind::Mse: return mse_loss(y, scores);
  }
  throw ConfigError("unknown loss");
}

nk::Var loss_on_tape(LossKind kind, nk::Var scores, std::span<const double> y) {
  const auto& s = scores.value();
  auto lv = evaluate_loss(kind, y, s.values());
  return nk::scalar_from_gradient(scores, lv.value, nk::Tensor(s.shape(), std::move(lv.grad)));
}

LossKind loss_for(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::MlpRegress: return LossKind::Mse;
    case ScorerKind::PairwiseNet: return LossKind::Pairwise;
    case ScorerKind::ListMleNet: return LossKind::ListMle;
    case ScorerKind::ListNetNet: return LossKind::ListNet;
    default: throw ConfigError("scorer kind '" + std::string(to_string(kind)) + "' is not trainable");
  }
}

// ---------------------------------------------------------------------------

MlpNetwork::MlpNetwork(std::size_t inputs, std::size_t width, Activation activation, nk::Rng rng)
    : inputs_(inputs), width_(width), activation_(activation) {
  auto uniform_matrix = [&](std::size_t r, std::size_t c) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(r));
    std::vector<double> v(r * c);
    for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
    return nk::Tensor::matrix(r, c, std::move(v));
  };
  params_ = {uniform_matrix(inputs, width), nk::Tensor::zeros({width}), uniform_matrix(width, width),
             nk::Tensor::zeros({width}),    uniform_matrix(width, 1),   nk::Tensor::zeros({1})};
}

MlpNetwork MlpNetwork::zeros(std::size_t inputs, std::size_t width, Activation activation) {
  MlpNetwork net;
  net.inputs_ = inputs;
  net.width_ = width;
  net.activation_ = activation;
  net.params_ = {nk::Tensor::zeros({inputs, width}), nk::Tensor::zeros({width}), nk::Tensor::zeros({width, width}),
                 nk::Tensor::zeros({width}),         nk::Tensor::zeros({width, 1}), nk::Tensor::zeros({1})};
  return net;
}

nk::Var MlpNetwork::forward(std::span<const nk::Var> p, nk::Var x, double dropout_rate, nk::Rng& rng,
                            bool training) const {
  if (p.size() != 6) throw ModelError("network expects 6 parameter tensors");
  if (x.value().cols() != inputs_) throw ModelError("feature dimension does not match the network input width");
  auto act = [&](nk::Var v) { return activation_ == Activation::Tanh ? nk::tanh(v) : nk::relu(v); };
  auto h = act(nk::add_row_bias(nk::matmul(x, p[0]), p[1]));
  h = nk::dropout(h, dropout_rate, rng, training);
  h = act(nk::add_row_bias(nk::matmul(h, p[2]), p[3]));
  h = nk::dropout(h, dropout_rate, rng, training);
  return nk::add_row_bias(nk::matmul(h, p[4]), p[5]);
}

std::vector<double> MlpNetwork::predict(const nk::Tensor& x) const {
  nk::Tape tape;
  const auto p = bind_leaves(tape, params_);
  nk::Rng unused(0);
  const auto out = forward(p, tape.constant(x), 0.0, unused, false);
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

std::vector<nk::Var> bind_leaves(nk::Tape& tape, const std::vector<nk::Tensor>& params) {
  std::vector<nk::Var> out;
  out.reserve(params.size());
  for (const auto& t : params) out.push_back(tape.leaf(t));
  return out;
}

nk::Tensor feature_matrix(std::span<const FeatureRow> rows, const ZScore& zscore) {
  std::vector<double> v;
  v.reserve(rows.size() * kFeatureCount);
  for (const auto& r : rows) {
    const auto z = zscore.apply(r.x);
    v.insert(v.end(), z.begin(), z.end());
  }
  return nk::Tensor::matrix(rows.size(), kFeatureCount, std::move(v));
}

BaseRanker BaseRanker::untrained(const ScorerSpec& spec, const ZScore& zscore) {
  spec.validate();
  BaseRanker m;
  m.spec = spec;
  m.zscore = zscore;
  if (is_neural(spec.kind)) {
    const auto act = spec.kind == ScorerKind::MlpRegress ? Activation::Relu : Activation::Tanh;
    m.network = MlpNetwork(kFeatureCount, spec.hidden_width, act, nk::Rng(spec.seed).split("init"));
  }
  return m;
}

std::vector<double> score_cross_section(const BaseRanker& model, std::span<const FeatureRow> rows) {
  if (rows.empty()) throw UsageError("cannot score an empty cross-section");
  std::vector<double> scores(rows.size());
  switch (model.spec.kind) {
    case ScorerKind::Random: {
      const nk::Rng root = nk::Rng(model.spec.seed).split("random-scores");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        nk::Rng r = root.split(rows[i].date).split(rows[i].asset);
        scores[i] = r.uniform();
      }
      return scores;
    }
    case ScorerKind::MacdHeuristic:
      for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = rows[i].x[kMacdFinal];
      return scores;
    default:
      if (!model.network) throw ModelError("neural scorer has no parameters");
      if (model.network->inputs() != kFeatureCount)
        throw ModelError("feature dimension does not match the network input width");
      return model.network->predict(feature_matrix(rows, model.zscore));
  }
}

}  // namespace xsrank
