#include "xsrank/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace xsrank {

namespace {

double sample_std(std::span<const double> w) {
  const double n = static_cast<double>(w.size());
  const double mu = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : w) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / (n - 1.0));
}

// Ratio that treats a numerically flat window as carrying no signal.
double safe_ratio(double num, double den, double scale) {
  if (den <= 1e-12 * std::max(scale, 1e-300)) return 0.0;
  return num / den;
}

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureCount> names{
      "ret_1m",       "norm_ret_1",    "norm_ret_3",    "norm_ret_5",    "norm_ret_10",
      "norm_ret_21",  "macd_8_24",     "macd_16_48",    "macd_32_96",    "macd_final"};
  return names;
}

std::optional<double> raw_monthly_return(const PricePanel& prices, std::size_t t, std::size_t asset) {
  if (t < kMonthDays || t >= prices.n_dates()) return std::nullopt;
  const double p1 = prices.rate(t, asset);
  const double p0 = prices.rate(t - kMonthDays, asset);
  if (is_missing(p0) || is_missing(p1)) return std::nullopt;
  return p1 / p0 - 1.0;
}

std::optional<std::array<double, 5>> normalized_returns(const PricePanel& prices, const ReturnPanel& returns,
                                                        std::size_t t, std::size_t asset) {
  if (t < kMonthDays || t >= prices.n_dates() || returns.vol.empty()) return std::nullopt;
  const double sigma = returns.vol[returns.index(t - 1, asset)];
  if (is_missing(sigma) || !(sigma > 0.0)) return std::nullopt;
  const double p1 = prices.rate(t, asset);
  if (is_missing(p1)) return std::nullopt;
  std::array<double, 5> out{};
  for (std::size_t k = 0; k < kNormalizedHorizons.size(); ++k) {
    const std::size_t h = kNormalizedHorizons[k];
    const double p0 = prices.rate(t - h, asset);
    if (is_missing(p0)) return std::nullopt;
    out[k] = (p1 / p0 - 1.0) / (sigma * std::sqrt(static_cast<double>(h)));
  }
  return out;
}

double macd_response(double u) { return u * std::exp(-u * u / 4.0) / 0.89; }

std::vector<std::optional<MacdValues>> macd_series(std::span<const double> prices, const MacdSettings& s) {
  std::vector<std::optional<MacdValues>> out(prices.size());
  std::vector<std::size_t> where;
  std::vector<double> obs;
  for (std::size_t t = 0; t < prices.size(); ++t) {
    if (!is_missing(prices[t])) {
      where.push_back(t);
      obs.push_back(prices[t]);
    }
  }
  const std::size_t n = obs.size();
  const std::size_t pw = s.price_std_window;
  const std::size_t sw = s.signal_std_window;
  if (n < pw + sw - 1) return out;

  // q[k][j]: MACD of pair k at observation j scaled by the 63-observation price std.
  std::array<std::vector<double>, 3> q;
  for (std::size_t k = 0; k < 3; ++k) {
    const double lam_s = 1.0 - 1.0 / s.pairs[k].first;
    const double lam_l = 1.0 - 1.0 / s.pairs[k].second;
    double num_s = 0, den_s = 0, num_l = 0, den_l = 0;
    q[k].assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      num_s = lam_s * num_s + obs[j];
      den_s = lam_s * den_s + 1.0;
      num_l = lam_l * num_l + obs[j];
      den_l = lam_l * den_l + 1.0;
      if (j + 1 < pw) continue;
      const double m = num_s / den_s - num_l / den_l;
      const auto window = std::span<const double>(obs).subspan(j + 1 - pw, pw);
      q[k][j] = safe_ratio(m, sample_std(window), obs[j]);
    }
  }
  for (std::size_t j = pw + sw - 2; j < n; ++j) {
    MacdValues v{};
    double final_sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto window = std::span<const double>(q[k]).subspan(j + 1 - sw, sw);
      double scale = 0.0;
      for (const double x : window) scale = std::max(scale, std::abs(x));
      v[k] = safe_ratio(q[k][j], sample_std(window), scale);
      final_sum += macd_response(v[k]);
    }
    v[3] = final_sum / 3.0;
    out[where[j]] = v;
  }
  return out;
}

std::optional<MacdValues> macd_features(const PricePanel& prices, std::size_t t, std::size_t asset,
                                        const MacdSettings& s) {
  if (t >= prices.n_dates()) return std::nullopt;
  std::vector<double> col(t + 1);
  for (std::size_t i = 0; i <= t; ++i) col[i] = prices.rate(i, asset);
  return macd_series(col, s)[t];
}

std::vector<int> decile_labels(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 10) throw DataError("decile labels need at least 10 assets, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t base = n / 10;
  const std::size_t extra = n % 10;
  std::vector<int> labels(n);
  std::size_t pos = 0;
  for (int bin = 0; bin < 10; ++bin) {
    const std::size_t size = base + (static_cast<std::size_t>(bin) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) labels[order[pos++]] = bin;
  }
  return labels;
}

FeatureFrame build_feature_frame(const PricePanel& prices, const ReturnPanel& returns,
                                 const FrameSettings& settings) {
  const std::size_t nd = prices.n_dates();
  const std::size_t na = prices.n_assets();
  if (returns.n_dates() + 1 != nd || returns.n_assets() != na || returns.vol.empty())
    throw DataError("return panel is not aligned with the price panel");

  std::vector<std::vector<std::optional<MacdValues>>> macd(na);
  for (std::size_t a = 0; a < na; ++a) macd[a] = macd_series(prices.column(a), settings.macd);

  FeatureFrame frame;
  frame.dates = prices.dates;
  frame.assets = prices.assets;

  std::vector<std::size_t> prior_returns(na, 0);
  std::vector<FeatureRow> candidates;
  std::vector<double> targets;
  for (std::size_t t = 1; t + 1 < nd; ++t) {
    for (std::size_t a = 0; a < na; ++a)
      if (!is_missing(returns.returns[returns.index(t - 1, a)])) ++prior_returns[a];

    candidates.clear();
    targets.clear();
    for (std::size_t a = 0; a < na; ++a) {
      if (prior_returns[a] < settings.min_prior_returns) continue;
      const auto& mv = macd[a][t];
      if (!mv) continue;
      const auto r1m = raw_monthly_return(prices, t, a);
      const auto norm = normalized_returns(prices, returns, t, a);
      if (!r1m || !norm) continue;
      const double next_raw = returns.returns[returns.index(t, a)];
      const double next_w = returns.winsorized[returns.index(t, a)];
      const double sigma = returns.vol[returns.index(t - 1, a)];
      if (is_missing(next_raw) || is_missing(next_w)) continue;

      FeatureRow row;
      row.date = t;
      row.asset = a;
      row.x[kRet1m] = *r1m;
      for (std::size_t k = 0; k < 5; ++k) row.x[kNormRet1 + k] = (*norm)[k];
      for (std::size_t k = 0; k < 4; ++k) row.x[kMacd8_24 + k] = (*mv)[k];
      row.next_return = next_raw;
      row.target = settings.label_target == LabelTarget::VolScaled ? next_w / sigma : next_w;
      row.vol = sigma;
      if (!std::all_of(row.x.begin(), row.x.end(), [](double v) { return std::isfinite(v); })) continue;
      candidates.push_back(row);
      targets.push_back(row.target);
    }
    if (candidates.size() < 10) continue;
    const auto labels = decile_labels(targets);
    DateSlice slice{t, frame.rows.size(), frame.rows.size() + candidates.size()};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      candidates[i].label = labels[i];
      frame.rows.push_back(candidates[i]);
    }
    frame.slices.push_back(slice);
  }
  if (frame.rows.empty()) throw DataError("feature frame is empty (insufficient history for warm-up)");
  return frame;
}

ZScore ZScore::fit(std::span<const FeatureRow> rows) {
  if (rows.empty()) throw DataError("cannot fit feature scaling on an empty set");
  ZScore z;
  const double n = static_cast<double>(rows.size());
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    double mu = 0.0;
    for (const auto& r : rows) mu += r.x[k];
    mu /= n;
    double var = 0.0;
    for (const auto& r : rows) var += (r.x[k] - mu) * (r.x[k] - mu);
    var /= n;
    z.mean[k] = mu;
    z.scale[k] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return z;
}

ZScore ZScore::identity() {
  ZScore z;
  z.scale.fill(1.0);
  return z;
}

FeatureVector ZScore::apply(const FeatureVector& x) const {
  FeatureVector out{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

void write_features_csv(std::ostream& out, const FeatureFrame& frame) {
  out << "date,asset";
  for (const auto name : feature_names()) out << ',' << name;
  out << ",label,next_return,target,vol\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& row : frame.rows) {
    out << format_date(frame.dates[row.date]) << ',' << frame.assets[row.asset];
    for (const double v : row.x) put(v);
    out << ',' << row.label;
    put(row.next_return);
    put(row.target);
    put(row.vol);
    out << '\n';
  }
}

}  // namespace xsrank
