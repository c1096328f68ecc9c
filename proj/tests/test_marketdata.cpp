#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "xsrank/marketdata.hpp"
#include "xsrank/rng.hpp"

using namespace xsrank;

namespace {

// Direct weighted sums over the whole history; O(n^2) but obviously right.
struct EwmRef {
  double mean, sd;
};

EwmRef ewm_ref(const std::vector<double>& xs, int span) {
  const double alpha = 2.0 / (span + 1.0);
  const std::size_t n = xs.size();
  double w = 0, w2 = 0, sx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = std::pow(1.0 - alpha, static_cast<double>(n - 1 - i));
    w += wi;
    w2 += wi * wi;
    sx += wi * xs[i];
  }
  const double mu = sx / w;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = std::pow(1.0 - alpha, static_cast<double>(n - 1 - i));
    ss += wi * (xs[i] - mu) * (xs[i] - mu);
  }
  const double denom = w - w2 / w;
  return {mu, denom > 0 ? std::sqrt(ss / denom) : 0.0};
}

std::vector<double> winsorize_ref(const std::vector<double>& xs, int span, double width) {
  std::vector<double> hist;
  for (double v : xs) {
    auto outside = [&](double c) {
      auto h = hist;
      h.push_back(c);
      const auto r = ewm_ref(h, span);
      return std::abs(c - r.mean) > width * r.sd;
    };
    if (outside(v)) {
      double in = hist.empty() ? v : ewm_ref(hist, span).mean, out = v;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (in + out);
        (outside(mid) ? out : in) = mid;
      }
      v = in;
    }
    hist.push_back(v);
  }
  return hist;
}

PricePanel panel_of(std::vector<double> prices) {
  PricePanel p;
  p.assets = {"A"};
  for (std::size_t i = 0; i < prices.size(); ++i)
    p.dates.push_back(Date{std::chrono::sys_days{std::chrono::days{10957 + static_cast<int>(i)}}});
  p.rates = std::move(prices);
  return p;
}

}  // namespace

TEST(LoadPricePanel, TwoRows) {
  std::istringstream in("date,symbol,rate\n2020-01-02,EUR,1.1\n2020-01-03,EUR,1.2\n");
  const auto p = load_price_panel(in);
  EXPECT_EQ(p.n_dates(), 2u);
  EXPECT_EQ(p.n_assets(), 1u);
  EXPECT_DOUBLE_EQ(p.rate(1, 0), 1.2);
}

TEST(LoadPricePanel, Errors) {
  std::istringstream dup("date,symbol,rate\n2020-01-02,EUR,1.1\n2020-01-02,EUR,1.2\n");
  EXPECT_THROW(load_price_panel(dup), DataError);
  std::istringstream neg("date,symbol,rate\n2020-01-02,EUR,-1\n");
  EXPECT_THROW(load_price_panel(neg), DataError);
  std::istringstream bad("date,symbol,rate\n2020-01-02,EUR,1\nnot-a-date,EUR,1\n");
  try {
    load_price_panel(bad);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadPricePanel, SortsDatesAndMarksMissing) {
  std::istringstream in(
      "date,symbol,rate\n2020-01-06,JPY,0.009\n2020-01-02,EUR,1.1\n2020-01-03,JPY,0.0091\n2020-01-06,EUR,1.3\n");
  const auto p = load_price_panel(in);
  ASSERT_EQ(p.n_dates(), 3u);
  EXPECT_TRUE(std::is_sorted(p.dates.begin(), p.dates.end()));
  EXPECT_EQ(format_date(p.dates.front()), "2020-01-02");
  EXPECT_EQ(p.assets, (std::vector<std::string>{"EUR", "JPY"}));
  EXPECT_TRUE(is_missing(p.rate(0, 1)));
  EXPECT_TRUE(is_missing(p.rate(1, 0)));
  EXPECT_DOUBLE_EQ(p.rate(2, 0), 1.3);

  std::ostringstream out;
  write_price_panel(out, p);
  std::istringstream back(out.str());
  const auto q = load_price_panel(back);
  EXPECT_EQ(q.dates, p.dates);
  for (std::size_t i = 0; i < p.rates.size(); ++i)
    EXPECT_TRUE((is_missing(p.rates[i]) && is_missing(q.rates[i])) || p.rates[i] == q.rates[i]);
}

TEST(DailyReturns, HandExamples) {
  const auto r = daily_returns(panel_of({100, 110, 99}));
  ASSERT_EQ(r.n_dates(), 2u);
  EXPECT_NEAR(r.returns[0], 0.10, 1e-15);
  EXPECT_NEAR(r.returns[1], -0.10, 1e-15);
  EXPECT_NEAR(daily_returns(panel_of({100, 101})).returns[0], 0.01, 1e-15);
  for (double v : daily_returns(panel_of({5, 5, 5, 5})).returns) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(daily_returns(panel_of({1.0})), DataError);
}

TEST(DailyReturns, MissingEndpointGivesMissing) {
  const auto r = daily_returns(panel_of({100, kMissing, 99, 98}));
  EXPECT_TRUE(is_missing(r.returns[0]));
  EXPECT_TRUE(is_missing(r.returns[1]));
  EXPECT_FALSE(is_missing(r.returns[2]));
}

TEST(Ewm, VolatilityMatchesDirectWeights) {
  std::vector<double> xs;
  for (int i = 0; i < 300; ++i) xs.push_back(i % 2 ? 0.01 : -0.01);
  const auto vol = ewm_volatility(xs, 63);
  for (std::size_t t = 1; t < xs.size(); t += 17) {
    const std::vector<double> head(xs.begin(), xs.begin() + static_cast<long>(t) + 1);
    EXPECT_NEAR(vol[t], ewm_ref(head, 63).sd, 1e-13);
  }
}

TEST(Ewm, ConstantIsZeroAndIidRecoversSigma) {
  for (double v : ewm_volatility(std::vector<double>(100, 0.003), 63)) EXPECT_NEAR(v, 0.0, 1e-15);
  nk::Rng r(11);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = 0.02 * r.normal();
  const auto vol = ewm_volatility(xs, 63);
  double tail = 0;
  for (std::size_t t = 5000; t < xs.size(); ++t) tail += vol[t];
  tail /= 5000.0;
  EXPECT_NEAR(tail, 0.02, 0.02 * 0.05);
}

TEST(Ewm, MissingInputsPassThrough) {
  const auto v = ewm_volatility(std::vector<double>{0.01, kMissing, -0.01}, 63);
  EXPECT_TRUE(is_missing(v[1]));
  EXPECT_NEAR(v[2], ewm_ref({0.01, -0.01}, 63).sd, 1e-15);
}

TEST(Winsorize, ConstantUnchangedAndIdempotent) {
  const std::vector<double> c(50, 0.5);
  EXPECT_EQ(winsorize(c), c);
  nk::Rng r(12);
  std::vector<double> xs(600);
  for (auto& x : xs) x = r.normal() * (r.uniform() < 0.02 ? 30.0 : 1.0);
  const auto once = winsorize(xs);
  EXPECT_EQ(winsorize(once), once);
  EXPECT_NE(once, xs);
}

TEST(Winsorize, MatchesDirectReference) {
  nk::Rng r(13);
  std::vector<double> xs(200);
  for (auto& x : xs) x = r.normal();
  xs[150] = 40.0;
  xs[170] = -25.0;
  const auto got = winsorize(xs, 252, 5.0);
  const auto want = winsorize_ref(xs, 252, 5.0);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9) << i;
  EXPECT_LT(got[150], 40.0);
  EXPECT_GT(got[170], -25.0);
}

TEST(Winsorize, SpikeSitsOnItsOwnBoundary) {
  nk::Rng r(14);
  std::vector<double> xs(300);
  for (auto& x : xs) x = 0.01 * r.normal();
  xs.push_back(10.0);
  const auto w = winsorize(xs);
  std::vector<double> hist(w.begin(), w.end());
  const auto s = ewm_ref(hist, 252);
  EXPECT_NEAR(w.back(), s.mean + 5.0 * s.sd, 1e-9);
}

TEST(MarketState, ConstantAndJump) {
  VixSeries v;
  for (int i = 0; i < 80; ++i) {
    v.dates.push_back(Date{std::chrono::sys_days{std::chrono::days{i}}});
    v.close.push_back(20.0);
  }
  auto s = classify_market_state(v);
  ASSERT_EQ(s.states.size(), 21u);  // first 59 dates carry no state
  EXPECT_EQ(s.dates.front(), v.dates[59]);
  for (auto st : s.states) EXPECT_EQ(st, MarketState::Normal);
  EXPECT_FALSE(s.at(v.dates[10]).has_value());

  // MA60 including the jump = 20.1, threshold 25.1, 26 >= 25.1.
  v.close.back() = 26.0;
  s = classify_market_state(v);
  EXPECT_EQ(s.states.back(), MarketState::RiskOff);
  EXPECT_EQ(s.at(v.dates.back()), MarketState::RiskOff);
  // 25.08 < 20.0847 + 5
  v.close.back() = 25.08;
  EXPECT_EQ(classify_market_state(v).states.back(), MarketState::Normal);

  v.close.resize(59);
  v.dates.resize(59);
  EXPECT_THROW(classify_market_state(v), DataError);
}

TEST(MarketState, Causal) {
  nk::Rng r(15);
  VixSeries v;
  for (int i = 0; i < 300; ++i) {
    v.dates.push_back(Date{std::chrono::sys_days{std::chrono::days{i}}});
    v.close.push_back(15.0 + 10.0 * r.uniform());
  }
  const auto a = classify_market_state(v);
  for (std::size_t i = 200; i < 300; ++i) v.close[i] = 80.0;
  const auto b = classify_market_state(v);
  for (std::size_t i = 0; i + 59 < 200; ++i) EXPECT_EQ(a.states[i], b.states[i]);
}

TEST(ReturnPanel, CausalUnderFuturePerturbation) {
  nk::Rng r(16);
  PricePanel p = panel_of(std::vector<double>(400, 1.0));
  for (std::size_t t = 1; t < 400; ++t) p.rates[t] = p.rates[t - 1] * (1.0 + 0.01 * r.normal());
  const auto a = build_return_panel(p);
  for (std::size_t t = 300; t < 400; ++t) p.rates[t] *= 3.0;
  const auto b = build_return_panel(p);
  // return row t ends at price date t+1
  for (std::size_t t = 0; t + 1 < 300; ++t) {
    EXPECT_EQ(a.returns[t], b.returns[t]);
    EXPECT_EQ(a.winsorized[t], b.winsorized[t]);
    EXPECT_EQ(a.vol[t], b.vol[t]);
  }
}
