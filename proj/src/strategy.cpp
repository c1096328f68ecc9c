#include "xsrank/strategy.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace xsrank {

namespace {

RebalanceDecision blank_decision(std::span<const FeatureRow> rows, std::span<const double> scores) {
  RebalanceDecision d;
  d.date = rows.front().date;
  const auto order = rank_rows(scores);
  d.assets.resize(rows.size());
  d.vol.resize(rows.size());
  d.signal.assign(rows.size(), 0);
  d.base_rank.assign(rows.size(), 0);
  d.context_rank.assign(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.assets[i] = rows[i].asset;
    d.vol[i] = rows[i].vol;
    d.base_rank[order[i]] = static_cast<int>(i + 1);
  }
  d.long_order = order;
  d.short_order = order;
  std::stable_sort(d.short_order.begin(), d.short_order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return d;
}

void mark(RebalanceDecision& d, std::size_t n_per_side) {
  for (std::size_t i = 0; i < n_per_side; ++i) {
    d.signal[d.long_order[i]] = 1;
    d.signal[d.short_order[i]] = -1;
    d.longs.push_back(d.assets[d.long_order[i]]);
    d.shorts.push_back(d.assets[d.short_order[i]]);
  }
}

double sample_std(std::span<const double> v) {
  // a constant series would otherwise keep ~1e-18 of rounding variance
  if (std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end()) return 0.0;
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (const double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / (n - 1.0));
}

}  // namespace

std::vector<std::size_t> rank_rows(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

RebalanceDecision select_portfolio_baseline(std::span<const FeatureRow> rows, std::span<const double> scores,
                                            std::size_t n_per_side) {
  if (scores.size() != rows.size()) throw DecisionError("one score per row required");
  if (n_per_side == 0) throw DecisionError("need at least one position per side");
  if (rows.size() < 2 * n_per_side)
    throw DecisionError("cross-section of " + std::to_string(rows.size()) + " is too small for " +
                        std::to_string(n_per_side) + " positions per side");
  auto d = blank_decision(rows, scores);
  mark(d, n_per_side);
  return d;
}

RebalanceDecision select_portfolio_context(std::span<const FeatureRow> rows, std::span<const double> base_scores,
                                           const ContextScorer& context, const ZScore& zscore, std::size_t m,
                                           std::size_t n_per_side) {
  if (m < n_per_side) throw DecisionError("sublist length must be at least the positions per side");
  if (rows.size() < 2 * m) {
    spdlog::warn("cross-section of {} is below 2m = {}; using baseline selection", rows.size(), 2 * m);
    return select_portfolio_baseline(rows, base_scores, n_per_side);
  }
  auto d = select_portfolio_baseline(rows, base_scores, n_per_side);
  d.longs.clear();
  d.shorts.clear();
  std::fill(d.signal.begin(), d.signal.end(), 0);

  const auto [lo, sh] = make_sublists(rows, base_scores, m, zscore);
  auto reorder = [&](const ContextSublist& sub, std::vector<std::size_t>& side_order) {
    const auto s = context(sub);
    if (s.size() != sub.items.size()) throw DecisionError("context model returned the wrong number of scores");
    // items are already in base-position order, so stable sorting breaks ties by position
    const auto local = rank_rows(s);
    std::vector<std::size_t> merged;
    merged.reserve(side_order.size());
    for (std::size_t r = 0; r < local.size(); ++r) {
      const std::size_t row = sub.items[local[r]].row;
      merged.push_back(row);
      d.context_rank[row] = static_cast<int>(r + 1);
    }
    merged.insert(merged.end(), side_order.begin() + static_cast<std::ptrdiff_t>(m), side_order.end());
    side_order = std::move(merged);
  };
  reorder(lo, d.long_order);
  reorder(sh, d.short_order);
  mark(d, n_per_side);
  return d;
}

double strategy_return(std::span<const int> signal, std::span<const double> vol, std::span<const double> next_returns,
                       double sigma_target) {
  if (signal.size() != vol.size() || signal.size() != next_returns.size())
    throw ShapeError("signal, vol and return lengths differ");
  const double ann = std::sqrt(kAnnualizationDays);
  double total = 0.0;
  std::size_t traded = 0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (signal[i] == 0) continue;
    if (!(vol[i] > 0.0) || !std::isfinite(vol[i]))
      throw NumericError("traded asset has non-positive volatility");
    total += signal[i] * (sigma_target / (vol[i] * ann)) * next_returns[i];
    ++traded;
  }
  return traded == 0 ? 0.0 : total / static_cast<double>(traded);
}

double strategy_return(const RebalanceDecision& decision, std::span<const FeatureRow> rows, double sigma_target) {
  if (rows.size() != decision.signal.size()) throw ShapeError("decision does not match the cross-section");
  std::vector<double> r(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) r[i] = rows[i].next_return;
  return strategy_return(decision.signal, decision.vol, r, sigma_target);
}

std::vector<double> rescale_to_target(std::span<const double> returns, double sigma_target) {
  if (returns.size() < 2) throw NumericError("rescaling needs at least two returns");
  const double vol = sample_std(returns) * std::sqrt(kAnnualizationDays);
  if (!(vol > 0.0) || !std::isfinite(vol)) throw NumericError("cannot rescale a series with zero variance");
  const double f = sigma_target / vol;
  std::vector<double> out(returns.begin(), returns.end());
  for (auto& x : out) x *= f;
  return out;
}

}  // namespace xsrank
