#include "xsrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace xsrank {

namespace {

double annualized_sharpe(std::span<const double> r) {
  if (std::adjacent_find(r.begin(), r.end(), std::not_equal_to<>()) == r.end()) return std::nan("");
  const double n = static_cast<double>(r.size());
  const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double ss = 0.0;
  for (const double x : r) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / (n - 1.0));
  return mu * kAnnualizationDays / (sd * std::sqrt(kAnnualizationDays));
}

std::vector<double> dcg_gains(std::span<const int> labels, Side side) {
  std::vector<double> g(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) g[i] = std::exp2(side_relevance(labels[i], side)) - 1.0;
  return g;
}

}  // namespace

double side_relevance(int label, Side side) { return side == Side::Long ? label : 9.0 - label; }

double ndcg_of_order(std::span<const int> labels, std::span<const std::size_t> order, std::size_t k, Side side) {
  if (k == 0) throw MetricError("k must be positive");
  if (labels.size() < k || order.size() < k)
    throw MetricError("list of length " + std::to_string(labels.size()) + " is shorter than k = " + std::to_string(k));
  const auto gains = dcg_gains(labels, side);
  double dcg = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    if (order[r] >= labels.size()) throw MetricError("order refers to a missing item");
    dcg += gains[order[r]] / std::log2(static_cast<double>(r) + 2.0);
  }
  auto ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < k; ++r) idcg += ideal[r] / std::log2(static_cast<double>(r) + 2.0);
  if (idcg == 0.0) return 1.0;
  return dcg / idcg;
}

double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, std::size_t k, Side side) {
  if (labels.size() != scores.size()) throw MetricError("label and score lengths differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (side == Side::Long)
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  else
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return ndcg_of_order(labels, order, k, side);
}

PerformanceSummary performance_summary(std::span<const double> r) {
  if (r.size() < 2) throw MetricError("performance summary needs at least two observations");
  const double n = static_cast<double>(r.size());
  const double ann = kAnnualizationDays;
  PerformanceSummary s;
  s.observations = r.size();

  const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double ss = 0.0, down = 0.0, pos_sum = 0.0, neg_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  for (const double x : r) {
    ss += (x - mu) * (x - mu);
    if (x < 0.0) {
      down += x * x;
      neg_sum += x;
      ++neg;
    } else if (x > 0.0) {
      pos_sum += x;
      ++pos;
    }
  }
  s.expected_return = mu * ann;
  const bool constant = std::adjacent_find(r.begin(), r.end(), std::not_equal_to<>()) == r.end();
  s.volatility = constant ? 0.0 : std::sqrt(ss / (n - 1.0)) * std::sqrt(ann);
  if (s.volatility > 0.0) s.sharpe = s.expected_return / s.volatility;
  s.downside_deviation = std::sqrt(down / n) * std::sqrt(ann);
  if (s.downside_deviation > 0.0) s.sortino = s.expected_return / s.downside_deviation;

  double wealth = 1.0, peak = 1.0;
  for (const double x : r) {
    wealth *= 1.0 + x;
    peak = std::max(peak, wealth);
    s.max_drawdown = std::max(s.max_drawdown, 1.0 - wealth / peak);
  }
  s.max_drawdown = std::clamp(s.max_drawdown, 0.0, 1.0);
  if (s.max_drawdown > 0.0) s.calmar = s.expected_return / s.max_drawdown;

  s.hit_rate = static_cast<double>(pos) / n;
  if (pos > 0 && neg > 0)
    s.ap_al = (pos_sum / static_cast<double>(pos)) / std::abs(neg_sum / static_cast<double>(neg));
  return s;
}

RegimeBreakdown regime_breakdown(std::span<const Date> dates, std::span<const double> returns,
                                 std::span<const double> ndcg, const MarketStateSeries& states) {
  if (dates.size() != returns.size()) throw MetricError("date and return lengths differ");
  if (!ndcg.empty() && ndcg.size() != returns.size()) throw MetricError("ndcg and return lengths differ");
  std::vector<double> r[2], g[2];
  RegimeBreakdown out;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const auto st = states.at(dates[i]);
    if (!st) {
      ++out.excluded;
      continue;
    }
    const int k = *st == MarketState::RiskOff ? 1 : 0;
    r[k].push_back(returns[i]);
    if (!ndcg.empty()) g[k].push_back(ndcg[i]);
  }
  auto stats = [&](int k) -> std::optional<RegimeStats> {
    if (r[k].empty()) return std::nullopt;
    RegimeStats s;
    s.count = r[k].size();
    if (r[k].size() >= 2) {
      const double sh = annualized_sharpe(r[k]);
      if (std::isfinite(sh)) s.sharpe = sh;
    }
    if (!g[k].empty()) s.mean_ndcg = std::accumulate(g[k].begin(), g[k].end(), 0.0) / static_cast<double>(g[k].size());
    return s;
  };
  out.normal = stats(0);
  out.risk_off = stats(1);
  return out;
}

}  // namespace xsrank
