#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xsrank/metrics.hpp"
#include "xsrank/persistence.hpp"
#include "xsrank/strategy.hpp"
#include "xsrank/training.hpp"

namespace xsrank {

/// Runs fn(0..n-1) on up to `workers` threads. Results must go to per-index
/// slots. The exception from the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Rand, Baz, MLP, PW, ML, LN, and the context variants PW/ML/LN + P/L.
struct ModelId {
  std::string name;
  ScorerKind base = ScorerKind::Random;
  std::optional<LossKind> context;
};

ModelId parse_model(std::string_view name);
std::vector<std::string> all_model_names();
std::string base_name(ScorerKind kind);

struct PipelineSettings {
  std::size_t m = 10;
  std::size_t k = 3;
  double sigma_target = 0.15;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  int block_years = 5;
  TrainConfig train;
  std::map<ScorerKind, SearchSpace> base_spaces;  // defaults when absent
  SearchSpace context_space = SearchSpace::for_context();
  FrameSettings frame;
  RiskSettings risk;
  int vix_window = 60;
  double vix_threshold = 5.0;

  SearchSpace base_space(ScorerKind kind) const;
  void validate() const;
};

/// Out-of-sample results of one model, concatenated over test blocks.
struct ModelSeries {
  std::string model;
  std::vector<std::size_t> dates;  // decision dates (price-date indices)
  std::vector<double> returns;     // portfolio return realised over (t, t+1]
  std::vector<double> ndcg_long;
  std::vector<double> ndcg_short;
  std::vector<RebalanceDecision> decisions;
};

/// One trained stage of one model in one block, enough to replay it.
struct TrainingRecord {
  std::string model;  // base name ("LN") or context variant ("LN+P")
  std::size_t block = 0;
  std::uint64_t seed = 0;
  HyperParams hyper;
  FitTrace trace;
  std::vector<double> trial_losses;
};

struct PipelineResult {
  FeatureFrame frame;
  MarketStateSeries states;
  std::vector<WalkForwardBlock> blocks;
  std::map<std::string, std::vector<ScorerBundle>> bundles;  // model -> one per block
  std::vector<ModelSeries> series;                           // in requested model order
  std::vector<TrainingRecord> training;                      // bases first, then context stages
};

/// Scores and trades every slice with a trained bundle.
ModelSeries backtest(const ScorerBundle& bundle, const FeatureFrame& frame, std::span<const DateSlice> slices,
                     std::size_t m, std::size_t k, double sigma_target);

/// Full walk-forward: features, per-block search and training, backtest.
PipelineResult run_pipeline(const PricePanel& prices, const VixSeries& vix, const std::vector<ModelId>& models,
                            const PipelineSettings& settings);

/// What the report needs per model; recoverable from returns.csv and ndcg.csv.
struct ReportSeries {
  std::string model;
  std::vector<Date> dates;
  std::vector<double> returns;
  std::vector<double> ndcg_long;
  std::vector<double> ndcg_short;
};

ReportSeries report_series(const ModelSeries& series, const std::vector<Date>& dates);

/// report.json content: raw and rescaled summaries, NDCG@k means, and the
/// per-regime split of every model.
nlohmann::json build_report(const std::vector<ReportSeries>& series, const MarketStateSeries& states,
                            double sigma_target);

}  // namespace xsrank
