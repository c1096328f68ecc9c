#include "xsrank/marketdata.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace xsrank {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

double parse_real(std::string_view s) {
  // from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw DataError("not a number: '" + std::string(s) + "'");
  return v;
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace

Date parse_date(std::string_view text) {
  text = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw DataError("bad date '" + std::string(text) + "'");
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (ec != std::errc() || ptr != text.data() + pos + len) throw DataError("bad date '" + std::string(text) + "'");
  };
  num(0, 4, y);
  num(5, 2, m);
  num(8, 2, d);
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw DataError("invalid date '" + std::string(text) + "'");
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

std::vector<double> PricePanel::column(std::size_t a) const {
  std::vector<double> out(dates.size());
  for (std::size_t t = 0; t < dates.size(); ++t) out[t] = rate(t, a);
  return out;
}

PricePanel load_price_panel(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("price file is empty");
  ++line_no;
  {
    const auto header = split_csv(line);
    if (header.size() != 3 || header[0] != "date" || header[1] != "symbol" || header[2] != "rate")
      fail_at(line_no, "expected header 'date,symbol,rate'");
  }
  std::map<std::pair<Date, std::string>, double> cells;
  std::set<Date> dates;
  std::set<std::string> assets;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3) fail_at(line_no, "expected 3 fields");
    Date date;
    double rate = 0.0;
    try {
      date = parse_date(fields[0]);
      rate = parse_real(fields[2]);
    } catch (const DataError& e) {
      fail_at(line_no, e.what());
    }
    if (fields[1].empty()) fail_at(line_no, "empty symbol");
    if (!std::isfinite(rate) || rate <= 0.0) fail_at(line_no, "rate must be positive");
    std::string symbol(fields[1]);
    if (!cells.emplace(std::make_pair(date, symbol), rate).second)
      fail_at(line_no, "duplicate row for " + format_date(date) + "," + symbol);
    dates.insert(date);
    assets.insert(std::move(symbol));
  }
  if (cells.empty()) throw DataError("price file has no rows");

  PricePanel panel;
  panel.dates.assign(dates.begin(), dates.end());
  panel.assets.assign(assets.begin(), assets.end());
  panel.rates.assign(panel.dates.size() * panel.assets.size(), kMissing);
  for (const auto& [key, rate] : cells) {
    const auto t = std::lower_bound(panel.dates.begin(), panel.dates.end(), key.first) - panel.dates.begin();
    const auto a = std::lower_bound(panel.assets.begin(), panel.assets.end(), key.second) - panel.assets.begin();
    panel.rate(static_cast<std::size_t>(t), static_cast<std::size_t>(a)) = rate;
  }
  return panel;
}

PricePanel load_price_panel(const std::string& path) {
  auto in = open_or_throw(path);
  try {
    return load_price_panel(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_price_panel(std::ostream& out, const PricePanel& panel) {
  out << "date,symbol,rate\n";
  char buf[64];
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    const auto d = format_date(panel.dates[t]);
    for (std::size_t a = 0; a < panel.n_assets(); ++a) {
      const double r = panel.rate(t, a);
      if (is_missing(r)) continue;
      std::snprintf(buf, sizeof buf, "%.17g", r);
      out << d << ',' << panel.assets[a] << ',' << buf << '\n';
    }
  }
}

PricePanel select_assets(const PricePanel& panel, std::span<const std::string> names) {
  if (names.empty()) throw DataError("asset selection is empty");
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    const auto it = std::find(panel.assets.begin(), panel.assets.end(), n);
    if (it == panel.assets.end()) throw DataError("asset '" + n + "' is not in the price panel");
    cols.push_back(static_cast<std::size_t>(it - panel.assets.begin()));
  }
  PricePanel out;
  out.dates = panel.dates;
  out.assets.assign(names.begin(), names.end());
  out.rates.reserve(panel.n_dates() * cols.size());
  for (std::size_t t = 0; t < panel.n_dates(); ++t)
    for (const auto c : cols) out.rates.push_back(panel.rate(t, c));
  return out;
}

VixSeries load_vix(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("vix file is empty");
  ++line_no;
  {
    const auto header = split_csv(line);
    if (header.size() != 2 || header[0] != "date" || header[1] != "close")
      fail_at(line_no, "expected header 'date,close'");
  }
  std::map<Date, double> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2) fail_at(line_no, "expected 2 fields");
    Date date;
    double close = 0.0;
    try {
      date = parse_date(fields[0]);
      close = parse_real(fields[1]);
    } catch (const DataError& e) {
      fail_at(line_no, e.what());
    }
    if (!std::isfinite(close)) fail_at(line_no, "close must be finite");
    if (!rows.emplace(date, close).second) fail_at(line_no, "duplicate date " + format_date(date));
  }
  VixSeries vix;
  for (const auto& [d, c] : rows) {
    vix.dates.push_back(d);
    vix.close.push_back(c);
  }
  return vix;
}

VixSeries load_vix(const std::string& path) {
  auto in = open_or_throw(path);
  try {
    return load_vix(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_vix(std::ostream& out, const VixSeries& vix) {
  out << "date,close\n";
  char buf[64];
  for (std::size_t i = 0; i < vix.dates.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", vix.close[i]);
    out << format_date(vix.dates[i]) << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------

ReturnPanel daily_returns(const PricePanel& panel) {
  if (panel.n_dates() < 2) throw DataError("at least two dates are needed to compute returns");
  ReturnPanel out;
  out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  out.assets = panel.assets;
  const std::size_t n = panel.n_assets();
  out.returns.assign(out.dates.size() * n, kMissing);
  for (std::size_t t = 1; t < panel.n_dates(); ++t)
    for (std::size_t a = 0; a < n; ++a) {
      const double p0 = panel.rate(t - 1, a);
      const double p1 = panel.rate(t, a);
      if (!is_missing(p0) && !is_missing(p1)) out.returns[(t - 1) * n + a] = p1 / p0 - 1.0;
    }
  return out;
}

ReturnPanel build_return_panel(const PricePanel& panel, const RiskSettings& settings) {
  ReturnPanel out = daily_returns(panel);
  const std::size_t n = out.n_assets();
  const std::size_t rows = out.n_dates();
  out.winsorized.assign(rows * n, kMissing);
  out.vol.assign(rows * n, kMissing);
  std::vector<double> series(rows);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t t = 0; t < rows; ++t) series[t] = out.returns[t * n + a];
    const auto w = winsorize(series, settings.winsor_span, settings.winsor_width);
    const auto v = ewm_volatility(w, settings.vol_span);
    for (std::size_t t = 0; t < rows; ++t) {
      out.winsorized[t * n + a] = w[t];
      out.vol[t * n + a] = v[t];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

EwmAccumulator::EwmAccumulator(int span) {
  if (span < 1) throw ConfigError("EWM span must be at least 1");
  decay_ = 1.0 - 2.0 / (static_cast<double>(span) + 1.0);
}

void EwmAccumulator::add(double x) {
  const double w_old = weight_ * decay_;
  m2_ *= decay_;
  weight_ = w_old + 1.0;
  weight_sq_ = weight_sq_ * decay_ * decay_ + 1.0;
  const double delta = x - mean_;
  mean_ += delta / weight_;
  m2_ += delta * (x - mean_);
}

double EwmAccumulator::variance() const noexcept {
  const double denom = weight_ * weight_ - weight_sq_;
  if (weight_ == 0.0 || denom <= 0.0) return 0.0;
  const double biased = std::max(m2_ / weight_, 0.0);
  return biased * weight_ * weight_ / denom;
}

std::pair<double, double> EwmAccumulator::preview(double x) const noexcept {
  EwmAccumulator copy = *this;
  copy.add(x);
  return {copy.mean(), copy.stddev()};
}

std::vector<double> winsorize(std::span<const double> series, int span, double width) {
  std::vector<double> out(series.begin(), series.end());
  EwmAccumulator acc(span);
  auto outside = [&](double v) {
    const auto [mu, sd] = acc.preview(v);
    return std::abs(v - mu) > width * sd;
  };
  for (auto& v : out) {
    if (is_missing(v)) continue;
    if (outside(v)) {
      // The old mean is always inside its own band; bisect towards v for the
      // boundary and keep the inside end so the result is a fixed point.
      double inside = acc.mean();
      double out_pt = v;
      for (int it = 0; it < 200 && inside != out_pt; ++it) {
        const double mid = 0.5 * (inside + out_pt);
        if (mid == inside || mid == out_pt) break;
        (outside(mid) ? out_pt : inside) = mid;
      }
      v = inside;
    }
    acc.add(v);
  }
  return out;
}

std::vector<double> ewm_volatility(std::span<const double> returns, int span) {
  std::vector<double> out(returns.size(), kMissing);
  EwmAccumulator acc(span);
  for (std::size_t t = 0; t < returns.size(); ++t) {
    if (is_missing(returns[t])) continue;
    acc.add(returns[t]);
    out[t] = acc.stddev();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<MarketState> MarketStateSeries::at(Date d) const {
  const auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it != d) return std::nullopt;
  return states[static_cast<std::size_t>(it - dates.begin())];
}

double MarketStateSeries::risk_off_fraction() const {
  if (states.empty()) return 0.0;
  const auto n = std::count(states.begin(), states.end(), MarketState::RiskOff);
  return static_cast<double>(n) / static_cast<double>(states.size());
}

MarketStateSeries classify_market_state(const VixSeries& vix, int window, double threshold) {
  if (window < 1) throw ConfigError("moving-average window must be positive");
  const auto w = static_cast<std::size_t>(window);
  if (vix.close.size() < w) {
    throw DataError("market-state classification needs at least " + std::to_string(window) + " observations");
  }
  MarketStateSeries out;
  for (std::size_t t = w - 1; t < vix.close.size(); ++t) {
    // Direct window sum; a running sum can drift across a threshold tie.
    double total = 0.0;
    for (std::size_t s = t + 1 - w; s <= t; ++s) total += vix.close[s];
    const double ma = total / static_cast<double>(w);
    out.dates.push_back(vix.dates[t]);
    out.states.push_back(vix.close[t] >= ma + threshold ? MarketState::RiskOff : MarketState::Normal);
  }
  return out;
}

}  // namespace xsrank
