#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xsrank/marketdata.hpp"

namespace xsrank {

inline constexpr std::size_t kFeatureCount = 10;

enum FeatureIndex : std::size_t {
  kRet1m = 0,
  kNormRet1,
  kNormRet3,
  kNormRet5,
  kNormRet10,
  kNormRet21,
  kMacd8_24,
  kMacd16_48,
  kMacd32_96,
  kMacdFinal,
};

using FeatureVector = std::array<double, kFeatureCount>;

const std::array<std::string_view, kFeatureCount>& feature_names();

/// Trading days in the "1-month" lookback.
inline constexpr std::size_t kMonthDays = 21;
inline constexpr std::array<std::size_t, 5> kNormalizedHorizons{1, 3, 5, 10, 21};

/// p_t / p_{t-21} - 1 using only the two endpoint prices.
std::optional<double> raw_monthly_return(const PricePanel& prices, std::size_t t, std::size_t asset);

/// For h in {1,3,5,10,21}: (p_t / p_{t-h} - 1) / (sigma_t * sqrt(h)).
/// `t` is a price-date index; sigma_t is returns.vol at row t-1.
std::optional<std::array<double, 5>> normalized_returns(const PricePanel& prices, const ReturnPanel& returns,
                                                        std::size_t t, std::size_t asset);

/// Bell-shaped response u * exp(-u^2 / 4) / 0.89.
double macd_response(double u);

struct MacdSettings {
  std::array<std::pair<int, int>, 3> pairs{{{8, 24}, {16, 48}, {32, 96}}};
  std::size_t price_std_window = 63;
  std::size_t signal_std_window = 252;
};

using MacdValues = std::array<double, 4>;  // three y values then the final indicator

/// MACD features for every date of one asset's price column. Missing prices
/// are skipped (windows count observations) and yield no value.
std::vector<std::optional<MacdValues>> macd_series(std::span<const double> prices, const MacdSettings& s = {});

/// MACD features at one date; equivalent to macd_series(...)[t].
std::optional<MacdValues> macd_features(const PricePanel& prices, std::size_t t, std::size_t asset,
                                        const MacdSettings& s = {});

/// Decile labels 0..9 for a cross-section. Items are sorted ascending by value
/// with ties broken by input position; the first n % 10 bins hold one extra
/// item. Throws DataError for fewer than 10 items.
std::vector<int> decile_labels(std::span<const double> values);

enum class LabelTarget { VolScaled, Raw };

struct FeatureRow {
  std::size_t date = 0;   // price-date index
  std::size_t asset = 0;  // asset index
  FeatureVector x{};
  int label = 0;
  double next_return = 0.0;  // raw r_{t,t+1}
  double target = 0.0;       // winsorised next return, vol-scaled unless LabelTarget::Raw
  double vol = 0.0;          // daily ex-ante sigma_t
};

struct DateSlice {
  std::size_t date = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Rows sorted by (date, asset), grouped into per-date slices.
struct FeatureFrame {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  std::vector<FeatureRow> rows;
  std::vector<DateSlice> slices;

  std::span<const FeatureRow> rows_of(const DateSlice& s) const {
    return std::span<const FeatureRow>(rows).subspan(s.begin, s.size());
  }
};

struct FrameSettings {
  LabelTarget label_target = LabelTarget::VolScaled;
  std::size_t min_prior_returns = 63;
  MacdSettings macd;
};

/// One row per (date, asset) with all ten features, a positive sigma_t, and a
/// next-period return; dates whose eligible cross-section is below ten are
/// dropped. Throws DataError when nothing survives (e.g. during warm-up).
FeatureFrame build_feature_frame(const PricePanel& prices, const ReturnPanel& returns,
                                 const FrameSettings& settings = {});

/// Per-feature standardisation fitted on a training subset.
struct ZScore {
  FeatureVector mean{};
  FeatureVector scale{};

  static ZScore fit(std::span<const FeatureRow> rows);
  static ZScore identity();
  FeatureVector apply(const FeatureVector& x) const;
};

void write_features_csv(std::ostream& out, const FeatureFrame& frame);

}  // namespace xsrank
