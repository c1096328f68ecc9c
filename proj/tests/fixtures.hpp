#pragma once

// Small pipeline configurations shared by the pipeline tests and the
// acceptance runner.

#include <bit>

#include "xsrank/pipeline.hpp"
#include "xsrank/rng.hpp"
#include "xsrank/synthetic.hpp"

namespace xsrank::testing {

/// One point per grid, few epochs: fast enough to train every block.
inline PipelineSettings quick_settings(std::uint64_t seed, std::size_t epochs = 4, std::size_t patience = 2) {
  PipelineSettings s;
  s.seed = seed;
  s.train.max_epochs = epochs;
  s.train.patience = patience;
  for (const auto k : {ScorerKind::MlpRegress, ScorerKind::PairwiseNet, ScorerKind::ListMleNet, ScorerKind::ListNetNet}) {
    SearchSpace sp = SearchSpace::for_scorer(k);
    sp.dropout_rates = {0.0};
    sp.learning_rates = {1e-3};
    sp.hidden_widths = {16};
    sp.n_trials = 1;
    s.base_spaces[k] = sp;
  }
  s.context_space.dropout_rates = {0.0};
  s.context_space.learning_rates = {1e-3};
  s.context_space.d_fc = {16};
  s.context_space.d_ff = {16};
  s.context_space.n_layers = {1};
  s.context_space.n_trials = 1;
  return s;
}

inline std::vector<ModelId> parse_models(const std::vector<std::string>& names) {
  std::vector<ModelId> out;
  for (const auto& n : names) out.push_back(parse_model(n));
  return out;
}

struct LookaheadReport {
  std::size_t cut = 0;                // last untouched price-date index
  std::size_t features_checked = 0;
  std::size_t features_changed = 0;
  std::size_t params_checked = 0;
  std::size_t params_changed = 0;
  std::size_t decisions_checked = 0;
  std::size_t decisions_changed = 0;
  bool future_moved = false;          // sanity: the perturbation did reach later decisions

  bool ok() const {
    return features_checked > 0 && params_checked > 0 && decisions_checked > 0 && features_changed == 0 &&
           params_changed == 0 && decisions_changed == 0 && future_moved;
  }
};

inline bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

inline std::size_t count_changed(const nk::Tensor& a, const nk::Tensor& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += !same_bits(a[i], b[i]);
  return n;
}

/// Runs the pipeline twice, the second time with every price and VIX close
/// after `cut_date` scrambled, and counts what changed at or before it.
inline LookaheadReport lookahead_check(const SyntheticMarket& market, Date cut_date,
                                       const std::vector<std::string>& models, const PipelineSettings& settings) {
  LookaheadReport rep;
  const auto& dates = market.prices.dates;
  while (rep.cut + 1 < dates.size() && dates[rep.cut + 1] <= cut_date) ++rep.cut;

  SyntheticMarket moved = market;
  nk::Rng r(settings.seed ^ 0x5eedULL);
  const std::size_t na = moved.prices.n_assets();
  for (std::size_t t = rep.cut + 1; t < dates.size(); ++t)
    for (std::size_t a = 0; a < na; ++a) moved.prices.rates[t * na + a] *= std::exp(0.05 * r.normal());
  for (std::size_t t = 0; t < moved.vix.dates.size(); ++t)
    if (moved.vix.dates[t] > dates[rep.cut]) moved.vix.close[t] *= 1.0 + r.uniform();

  const auto ids = parse_models(models);
  const auto a = run_pipeline(market.prices, market.vix, ids, settings);
  const auto b = run_pipeline(moved.prices, moved.vix, ids, settings);

  // features: compare every row dated at or before the cut
  std::size_t ia = 0, ib = 0;
  while (ia < a.frame.rows.size() && ib < b.frame.rows.size()) {
    const auto& ra = a.frame.rows[ia];
    const auto& rb = b.frame.rows[ib];
    if (ra.date > rep.cut || rb.date > rep.cut) break;
    ++rep.features_checked;
    bool same = ra.date == rb.date && ra.asset == rb.asset;
    for (std::size_t f = 0; same && f < kFeatureCount; ++f) same = same_bits(ra.x[f], rb.x[f]);
    same = same && same_bits(ra.vol, rb.vol);
    rep.features_changed += !same;
    ++ia;
    ++ib;
  }

  // parameters of blocks trained entirely before the cut
  for (const auto& [name, bundles] : a.bundles)
    for (std::size_t blk = 0; blk < bundles.size(); ++blk) {
      if (a.blocks[blk].train.last > dates[rep.cut]) continue;
      const auto& x = bundles[blk];
      const auto& y = b.bundles.at(name)[blk];
      if (x.base.network)
        for (std::size_t k = 0; k < x.base.network->params().size(); ++k) {
          ++rep.params_checked;
          rep.params_changed += count_changed(x.base.network->params()[k], y.base.network->params()[k]) > 0;
        }
      if (x.context) {
        const auto tx = x.context->params.tensors(), ty = y.context->params.tensors();
        for (std::size_t k = 0; k < tx.size(); ++k) {
          ++rep.params_checked;
          rep.params_changed += count_changed(*tx[k], *ty[k]) > 0;
        }
      }
    }

  // decisions dated at or before the cut
  for (std::size_t mi = 0; mi < a.series.size(); ++mi) {
    const auto& sa = a.series[mi];
    const auto& sb = b.series[mi];
    for (std::size_t i = 0; i < sa.dates.size() && i < sb.dates.size(); ++i) {
      if (sa.dates[i] > rep.cut) {
        if (sa.decisions[i].signal != sb.decisions[i].signal) rep.future_moved = true;
        continue;
      }
      ++rep.decisions_checked;
      rep.decisions_changed += sa.dates[i] != sb.dates[i] || sa.decisions[i].signal != sb.decisions[i].signal;
    }
  }
  return rep;
}

}  // namespace xsrank::testing
