#include "xsrank/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "xsrank/rng.hpp"

namespace xsrank {

namespace {

namespace cr = std::chrono;

constexpr double kDriftScale = 0.6;  // drift sd per unit of momentum strength, idiosyncratic vol units
constexpr double kTrendPhi = 0.99;     // ~70-day half-life
constexpr double kCommonScale = 2.0;   // common shock sd at VIX 18, vol units
constexpr double kVixBase = 18.0;
constexpr double kSpikeRate = 1.0 / 260.0;
constexpr double kSpikeDecay = 0.93;
constexpr double kVixNoise = 0.025;  // log-VIX innovation sd; ~4% of dates end up RiskOff

std::vector<Date> weekdays(std::size_t n) {
  std::vector<Date> out;
  out.reserve(n);
  cr::sys_days d = cr::sys_days{cr::year{2000} / cr::January / 3};
  while (out.size() < n) {
    const cr::weekday wd{d};
    if (wd != cr::Saturday && wd != cr::Sunday) out.emplace_back(d);
    d += cr::days{1};
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_assets < 10) throw ConfigError("synthetic panel needs at least 10 assets");
  if (n_days < 600) throw ConfigError("synthetic panel needs at least 600 days");
  if (!(momentum_strength >= 0.0) || !std::isfinite(momentum_strength))
    throw ConfigError("momentum strength must be a non-negative number");
  if (!(context_strength >= 0.0) || !std::isfinite(context_strength))
    throw ConfigError("context strength must be a non-negative number");
}

SyntheticMarket make_synthetic_panel(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t na = spec.n_assets;
  const std::size_t nd = spec.n_days;
  const nk::Rng root(spec.seed);

  SyntheticMarket out;
  const auto dates = weekdays(nd);

  // VIX
  {
    nk::Rng r = root.split("vix");
    out.vix.dates = dates;
    out.vix.close.resize(nd);
    double x = 0.0, spike = 0.0;
    for (std::size_t t = 0; t < nd; ++t) {
      x = 0.98 * x + kVixNoise * r.normal();
      spike *= kSpikeDecay;
      if (r.uniform() < kSpikeRate) spike += 12.0 + 13.0 * r.uniform();
      out.vix.close[t] = kVixBase * std::exp(x) + spike;
    }
  }

  // Prices
  nk::Rng r = root.split("prices");
  out.prices.dates = dates;
  for (std::size_t a = 0; a < na; ++a) {
    char name[32];
    std::snprintf(name, sizeof name, "S%03zu", a);
    out.prices.assets.emplace_back(name);
  }
  out.prices.rates.assign(nd * na, 0.0);

  std::vector<double> vol(na), trend(na), e_prev(na, 0.0), e(na);
  for (std::size_t a = 0; a < na; ++a) {
    vol[a] = 0.003 + 0.004 * r.uniform();
    trend[a] = r.normal();
    out.prices.rate(0, a) = 0.5 + 1.5 * r.uniform();
  }
  const double trend_sd = std::sqrt(1.0 - kTrendPhi * kTrendPhi);
  // E|x - mean| for n standard normals
  const double centre = std::sqrt(2.0 / std::numbers::pi * (1.0 - 1.0 / static_cast<double>(na)));

  for (std::size_t t = 1; t < nd; ++t) {
    double mean_prev = 0.0;
    for (const double v : e_prev) mean_prev += v;
    mean_prev /= static_cast<double>(na);
    const double common = kCommonScale * (out.vix.close[t] / kVixBase) * r.normal();
    for (std::size_t a = 0; a < na; ++a) {
      e[a] = r.normal();
      const double drift = spec.momentum_strength * kDriftScale * trend[a];
      const double ctx = spec.context_strength * (centre - std::abs(e_prev[a] - mean_prev));
      const double ret = vol[a] * (drift + ctx + common + e[a]);
      out.prices.rate(t, a) = out.prices.rate(t - 1, a) * (1.0 + ret);
      trend[a] = kTrendPhi * trend[a] + trend_sd * r.normal();
    }
    std::swap(e, e_prev);
  }
  return out;
}

}  // namespace xsrank
