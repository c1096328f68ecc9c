#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xsrank/features.hpp"
#include "xsrank/numkernel.hpp"

namespace xsrank {

enum class ScorerKind { Random, MacdHeuristic, MlpRegress, PairwiseNet, ListMleNet, ListNetNet };

std::string_view to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(std::string_view name);
bool is_neural(ScorerKind kind);

struct ScorerSpec {
  ScorerKind kind = ScorerKind::Random;
  std::size_t hidden_width = 16;
  double dropout_rate = 0.0;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Losses. Each returns the value and its gradient w.r.t. the scores.

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

enum class LossKind { Pairwise, ListNet, ListMle, Mse };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

/// sum_{i,j} 1[y_i > y_j] * log(1 + exp(s_j - s_i)).
LossValue pairwise_logistic_loss(std::span<const double> labels, std::span<const double> scores);

/// -sum_i softmax(y)_i * log softmax(s)_i.
LossValue listnet_loss(std::span<const double> labels, std::span<const double> scores);

/// Negative Plackett-Luce log-likelihood of the label-descending permutation.
/// Equal labels are ordered by position (lower index first).
LossValue listmle_loss(std::span<const double> labels, std::span<const double> scores);

/// Mean squared error.
LossValue mse_loss(std::span<const double> targets, std::span<const double> scores);

LossValue evaluate_loss(LossKind kind, std::span<const double> y, std::span<const double> scores);

/// Records a fused loss node over an n x 1 (or length-n) score value.
nk::Var loss_on_tape(LossKind kind, nk::Var scores, std::span<const double> y);

LossKind loss_for(ScorerKind kind);

// ---------------------------------------------------------------------------
// Networks

enum class Activation { Tanh, Relu };

/// input -> hidden (width w) -> hidden (width w) -> scalar.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  MlpNetwork(std::size_t inputs, std::size_t width, Activation activation, nk::Rng rng);

  static MlpNetwork zeros(std::size_t inputs, std::size_t width, Activation activation);

  std::size_t inputs() const noexcept { return inputs_; }
  std::size_t width() const noexcept { return width_; }
  Activation activation() const noexcept { return activation_; }

  std::vector<nk::Tensor>& params() noexcept { return params_; }
  const std::vector<nk::Tensor>& params() const noexcept { return params_; }

  /// x is n x inputs; returns n x 1 scores. `p` are the parameters bound on `tape`.
  nk::Var forward(std::span<const nk::Var> p, nk::Var x, double dropout_rate, nk::Rng& rng, bool training) const;

  /// Evaluation-mode scores.
  std::vector<double> predict(const nk::Tensor& x) const;

 private:
  std::size_t inputs_ = 0;
  std::size_t width_ = 0;
  Activation activation_ = Activation::Tanh;
  std::vector<nk::Tensor> params_;  // W1, b1, W2, b2, W3, b3
};

/// Binds tensors as leaves on a tape, preserving order.
std::vector<nk::Var> bind_leaves(nk::Tape& tape, const std::vector<nk::Tensor>& params);

/// Feature rows as an n x 10 matrix after z-scoring.
nk::Tensor feature_matrix(std::span<const FeatureRow> rows, const ZScore& zscore);

/// A base scoring function f(x; theta): heuristic, random, or trained network.
struct BaseRanker {
  ScorerSpec spec;
  ZScore zscore = ZScore::identity();
  std::optional<MlpNetwork> network;

  static BaseRanker untrained(const ScorerSpec& spec, const ZScore& zscore);
};

/// One score per row of a single-date cross-section (higher = more attractive).
std::vector<double> score_cross_section(const BaseRanker& model, std::span<const FeatureRow> rows);

}  // namespace xsrank
