#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "xsrank/context_transformer.hpp"
#include "xsrank/features.hpp"
#include "xsrank/rankers.hpp"

namespace xsrank {

// ---------------------------------------------------------------------------
// Walk-forward blocks

struct DateRange {
  Date first;
  Date last;  // inclusive
  bool contains(Date d) const { return first <= d && d <= last; }
};

struct WalkForwardBlock {
  DateRange train;
  DateRange test;
};

/// Calendar-aligned 5-year test windows starting five years after the first
/// date's year; each is trained on the five calendar years before it. The
/// last window ends at the last date. Needs at least ten calendar years.
std::vector<WalkForwardBlock> make_walk_forward_plan(std::span<const Date> dates, int block_years = 5);

/// Frame slices usable for training inside `range`: the slice date and the
/// date its label is realised on must both fall inside the range.
std::vector<DateSlice> training_slices(const FeatureFrame& frame, const DateRange& range);

/// Frame slices whose rebalance date lies in `range`.
std::vector<DateSlice> slices_in(const FeatureFrame& frame, const DateRange& range);

// ---------------------------------------------------------------------------
// Epoch loop

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 25;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitTrace {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // 1-based
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_run() const noexcept { return validation_loss.size(); }
};

/// Anything the epoch loop can drive.
class Trainable {
 public:
  virtual ~Trainable() = default;
  /// One pass over the training dates; returns the mean training loss.
  virtual double train_epoch(nk::Rng& rng) = 0;
  virtual double validation_loss() = 0;
  virtual void keep_best() = 0;
  virtual void restore_best() = 0;
};

/// Runs epochs until max_epochs or until validation loss has not strictly
/// improved for `patience` consecutive epochs, then restores the best epoch.
FitTrace fit(Trainable& model, const TrainConfig& config);

struct ChronoSplit {
  std::vector<DateSlice> train;
  std::vector<DateSlice> validation;
};

/// Oldest train_fraction of dates for training, the rest for validation.
ChronoSplit chronological_split(std::span<const DateSlice> slices, double train_fraction);

// ---------------------------------------------------------------------------
// Two-stage training

struct TrainedBase {
  BaseRanker model;
  FitTrace trace;
};

/// Fits feature scaling on the window and trains the network (if any).
TrainedBase train_model(const ScorerSpec& spec, const FeatureFrame& frame, std::span<const DateSlice> window,
                        const TrainConfig& config);

struct ContextModel {
  EncoderSpec spec;
  EncoderParams params;
};

struct TrainedContext {
  ContextModel model;
  FitTrace trace;
};

/// The frozen base ranker builds long and short sublists for every window
/// date; one encoder is trained on both with the configured ranking loss.
TrainedContext train_context_stage(const BaseRanker& base, const FeatureFrame& frame,
                                   std::span<const DateSlice> window, std::size_t m, const EncoderSpec& spec,
                                   const TrainConfig& config);

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HyperParams {
  double dropout_rate = 0.0;
  double learning_rate = 1e-3;
  std::size_t hidden_width = 16;
  std::size_t d_fc = 16;
  std::size_t d_ff = 16;
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct SearchSpace {
  std::vector<double> dropout_rates;
  std::vector<double> learning_rates;
  std::vector<std::size_t> hidden_widths;
  std::vector<std::size_t> d_fc;
  std::vector<std::size_t> d_ff;
  std::vector<std::size_t> n_layers;
  std::size_t n_heads = 1;
  std::size_t n_trials = 50;

  static SearchSpace for_scorer(ScorerKind kind);
  static SearchSpace for_context();
  void validate() const;
};

/// n_trials seeded uniform draws from the grid product (with replacement).
std::vector<HyperParams> sample_trials(const SearchSpace& space, std::uint64_t seed);

struct SearchResult {
  std::vector<HyperParams> trials;
  std::vector<double> losses;  // +inf for failed trials
  std::size_t best = 0;
};

/// Evaluates every sampled trial (possibly in parallel) and picks the lowest
/// loss, earliest trial on ties. `evaluate` must be safe to call concurrently.
SearchResult hyperparameter_search(const SearchSpace& space, std::uint64_t seed,
                                   const std::function<double(const HyperParams&, std::size_t)>& evaluate,
                                   std::size_t workers = 1);

struct SearchedBase {
  TrainedBase trained;
  HyperParams hyper;
  SearchResult search;
};

SearchedBase search_base_ranker(ScorerKind kind, const SearchSpace& space, const FeatureFrame& frame,
                                std::span<const DateSlice> window, const TrainConfig& config,
                                std::size_t workers = 1);

struct SearchedContext {
  TrainedContext trained;
  HyperParams hyper;
  SearchResult search;
};

SearchedContext search_context_model(const BaseRanker& base, LossKind loss, const SearchSpace& space,
                                     const FeatureFrame& frame, std::span<const DateSlice> window, std::size_t m,
                                     const TrainConfig& config, std::size_t workers = 1);

}  // namespace xsrank
