#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xsrank/marketdata.hpp"
#include "xsrank/side.hpp"

namespace xsrank {

/// Relevance used for a side: label (long) or 9 - label (short).
double side_relevance(int label, Side side);

/// NDCG@k over items visited in `order` (row indices, best first). Gain
/// 2^rel - 1, discount 1/log2(rank + 1). Ideal DCG of 0 gives 1.
double ndcg_of_order(std::span<const int> labels, std::span<const std::size_t> order, std::size_t k, Side side);

/// Long: highest scores first. Short: lowest scores first. Ties by index.
double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, std::size_t k, Side side);

struct PerformanceSummary {
  std::size_t observations = 0;
  double expected_return = 0.0;     // annualised mean
  double volatility = 0.0;          // annualised sample std
  std::optional<double> sharpe;
  double downside_deviation = 0.0;  // annualised
  double max_drawdown = 0.0;        // fraction of peak wealth
  std::optional<double> sortino;
  std::optional<double> calmar;
  double hit_rate = 0.0;
  std::optional<double> ap_al;
};

PerformanceSummary performance_summary(std::span<const double> daily_returns);

struct RegimeStats {
  std::size_t count = 0;
  std::optional<double> sharpe;
  std::optional<double> mean_ndcg;
};

struct RegimeBreakdown {
  std::optional<RegimeStats> normal;
  std::optional<RegimeStats> risk_off;
  std::size_t excluded = 0;  // dates without a market state
};

/// Partitions by the state on each decision date. `ndcg` may be empty.
RegimeBreakdown regime_breakdown(std::span<const Date> dates, std::span<const double> returns,
                                 std::span<const double> ndcg, const MarketStateSeries& states);

}  // namespace xsrank
