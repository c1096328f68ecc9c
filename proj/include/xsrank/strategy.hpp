#pragma once

#include <functional>
#include <span>
#include <vector>

#include "xsrank/context_transformer.hpp"
#include "xsrank/features.hpp"

namespace xsrank {

inline constexpr std::size_t kPerSide = 3;

/// Positions for one rebalance date. Per-row vectors follow the order of the
/// date's cross-section rows (ascending asset index).
struct RebalanceDecision {
  std::size_t date = 0;
  std::vector<std::size_t> longs;   // asset indices
  std::vector<std::size_t> shorts;  // asset indices
  std::vector<std::size_t> assets;
  std::vector<int> signal;          // +1 / 0 / -1
  std::vector<double> vol;          // daily sigma_t
  std::vector<int> base_rank;       // 1 = highest base score
  std::vector<int> context_rank;    // 1-based within a re-ranked sublist, 0 outside
  // Row indices in preference order for each side, used for NDCG.
  std::vector<std::size_t> long_order;
  std::vector<std::size_t> short_order;
};

/// Row indices sorted by descending score; equal scores keep row (asset) order.
std::vector<std::size_t> rank_rows(std::span<const double> scores);

/// Top n_per_side scores long, bottom n_per_side short. Needs at least
/// 2 * n_per_side rows.
RebalanceDecision select_portfolio_baseline(std::span<const FeatureRow> rows, std::span<const double> scores,
                                            std::size_t n_per_side = kPerSide);

/// Scores for a sublist; higher means a stronger position on that sublist's side.
using ContextScorer = std::function<std::vector<double>(const ContextSublist&)>;

/// Re-scores the base top-m and bottom-m sublists and keeps each one's best
/// n_per_side. Falls back to the baseline when the cross-section is below 2m.
RebalanceDecision select_portfolio_context(std::span<const FeatureRow> rows, std::span<const double> base_scores,
                                           const ContextScorer& context, const ZScore& zscore, std::size_t m = 10,
                                           std::size_t n_per_side = kPerSide);

/// (1/n_traded) * sum_i S_i * (sigma_tgt / sigma_i) * r_i with sigma_i annualised.
double strategy_return(std::span<const int> signal, std::span<const double> vol,
                       std::span<const double> next_returns, double sigma_target = 0.15);
double strategy_return(const RebalanceDecision& decision, std::span<const FeatureRow> rows,
                       double sigma_target = 0.15);

/// Scales a whole series so its annualised sample volatility is sigma_target.
std::vector<double> rescale_to_target(std::span<const double> returns, double sigma_target = 0.15);

}  // namespace xsrank
