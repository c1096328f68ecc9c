#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xsrank/errors.hpp"

namespace xsrank {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD; throws DataError on malformed or impossible dates.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Missing observations are stored as quiet NaN and never silently zeroed.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// Trading days per year used for every annualisation.
inline constexpr double kAnnualizationDays = 261.0;

/// Date x asset matrix of positive USD-quoted rates.
struct PricePanel {
  std::vector<Date> dates;          // strictly increasing
  std::vector<std::string> assets;  // unique, sorted
  std::vector<double> rates;        // row-major dates x assets, NaN when missing

  std::size_t n_dates() const noexcept { return dates.size(); }
  std::size_t n_assets() const noexcept { return assets.size(); }
  double rate(std::size_t t, std::size_t a) const { return rates[t * assets.size() + a]; }
  double& rate(std::size_t t, std::size_t a) { return rates[t * assets.size() + a]; }
  std::vector<double> column(std::size_t a) const;
};

/// Reads `date,symbol,rate` rows. Dates are sorted and cells absent from the
/// file are marked missing.
PricePanel load_price_panel(std::istream& in);
PricePanel load_price_panel(const std::string& path);
void write_price_panel(std::ostream& out, const PricePanel& panel);

/// Keeps the named assets, in the given order. Unknown names are a data error.
PricePanel select_assets(const PricePanel& panel, std::span<const std::string> names);

struct VixSeries {
  std::vector<Date> dates;
  std::vector<double> close;
};

/// Reads `date,close` rows.
VixSeries load_vix(std::istream& in);
VixSeries load_vix(const std::string& path);
void write_vix(std::ostream& out, const VixSeries& vix);

/// Simple returns aligned to price dates [1, n).
///
/// Row t holds r_{t-1,t} in price-date terms, i.e. dates[t] is the return's
/// end date. `vol` row t is the ex-ante daily volatility known at dates[t]
/// and is estimated from winsorised returns up to and including that row.
struct ReturnPanel {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  std::vector<double> returns;
  std::vector<double> winsorized;
  std::vector<double> vol;

  std::size_t n_dates() const noexcept { return dates.size(); }
  std::size_t n_assets() const noexcept { return assets.size(); }
  std::size_t index(std::size_t t, std::size_t a) const noexcept { return t * assets.size() + a; }
};

struct RiskSettings {
  int vol_span = 63;
  int winsor_span = 252;
  double winsor_width = 5.0;
};

/// p_t / p_{t-1} - 1 per asset; `winsorized` and `vol` are left empty.
ReturnPanel daily_returns(const PricePanel& panel);

/// daily_returns plus per-asset winsorisation and EWM volatility.
ReturnPanel build_return_panel(const PricePanel& panel, const RiskSettings& settings = {});

/// Exponentially weighted mean/variance with normalised weights, span-based
/// decay alpha = 2 / (span + 1) and the unbiased weighted-variance correction.
class EwmAccumulator {
 public:
  explicit EwmAccumulator(int span);

  void add(double x);
  bool empty() const noexcept { return weight_ == 0.0; }
  double mean() const noexcept { return mean_; }
  /// Unbiased weighted variance; 0 until two observations are available.
  double variance() const noexcept;
  double stddev() const noexcept { return std::sqrt(variance()); }

  /// Mean and stddev that would result from add(x), without mutating.
  std::pair<double, double> preview(double x) const noexcept;

 private:
  double decay_;
  double weight_ = 0.0;
  double weight_sq_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Clips each value to within `width` EWM standard deviations of the EWM mean
/// (span `span`), where the statistics at t cover the already-clipped history
/// and the clipped value itself. A clipped value sits exactly on its own
/// boundary, which makes the operation idempotent. NaN passes through.
std::vector<double> winsorize(std::span<const double> series, int span = 252, double width = 5.0);

/// EWM standard deviation over returns up to and including t. NaN inputs give
/// NaN outputs and do not update the estimate.
std::vector<double> ewm_volatility(std::span<const double> returns, int span = 63);

enum class MarketState { Normal, RiskOff };

struct MarketStateSeries {
  std::vector<Date> dates;
  std::vector<MarketState> states;

  std::optional<MarketState> at(Date d) const;
  double risk_off_fraction() const;
};

/// RiskOff at t iff vix_t >= (simple mean of the `window` closes ending at t)
/// + threshold. The first window-1 dates carry no state.
MarketStateSeries classify_market_state(const VixSeries& vix, int window = 60, double threshold = 5.0);

}  // namespace xsrank
