#pragma once

#include <cstdint>

#include "xsrank/marketdata.hpp"

namespace xsrank {

struct SyntheticSpec {
  std::size_t n_assets = 31;
  std::size_t n_days = 2609;  // weekdays 2000-01-03 .. 2009-12-31
  double momentum_strength = 0.3;
  double context_strength = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticMarket {
  PricePanel prices;
  VixSeries vix;
};

/// Geometric random walks driven by, per asset and day (in units of the
/// asset's own volatility):
///   drift     momentum_strength * k * d      d: slow AR(1) trend state
///   context   context_strength * (c - |e_prev - mean(e_prev)|)
///   common    vix-scaled market shock shared by every asset
///   noise     idiosyncratic shock e
/// The context term only becomes visible once yesterday's common shock is
/// removed, which needs the other assets' returns, so a per-asset scorer
/// cannot recover it. VIX follows a mean-reverting log process with
/// occasional decaying spikes.
SyntheticMarket make_synthetic_panel(const SyntheticSpec& spec);

}  // namespace xsrank
