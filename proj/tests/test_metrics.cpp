#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "xsrank/metrics.hpp"
#include "xsrank/rng.hpp"

using namespace xsrank;
using xsrank::testing::ndcg_bruteforce;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(Ndcg, ExhaustiveShortListsMatchBruteForce) {
  nk::Rng r(1);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 10;
    for (std::size_t c = 0; c < combos; ++c) {
      std::vector<int> labels(n);
      for (std::size_t i = 0, x = c; i < n; ++i, x /= 10) labels[i] = static_cast<int>(x % 10);
      std::vector<double> scores(n);
      for (auto& s : scores) s = r.normal();
      for (std::size_t k = 1; k <= n; ++k)
        for (Side side : {Side::Long, Side::Short})
          ASSERT_NEAR(ndcg_at_k(labels, scores, k, side), ndcg_bruteforce(labels, scores, k, side), 1e-12);
    }
  }
}

TEST(Ndcg, RandomLengthFiveAndSixMatchBruteForce) {
  nk::Rng r(2);
  for (std::size_t n : {5u, 6u})
    for (int trial = 0; trial < 3000; ++trial) {
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(r.below(10));
      std::vector<double> scores(n);
      // coarse scores so ties happen
      for (auto& s : scores) s = static_cast<double>(r.below(4));
      for (std::size_t k = 1; k <= n; ++k)
        for (Side side : {Side::Long, Side::Short})
          ASSERT_NEAR(ndcg_at_k(labels, scores, k, side), ndcg_bruteforce(labels, scores, k, side), 1e-12);
    }
}

TEST(Ndcg, IdealOrderingIsExactlyOne) {
  nk::Rng r(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + r.below(20);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(r.below(10));
    std::vector<double> s(labels.begin(), labels.end());
    EXPECT_EQ(ndcg_at_k(labels, s, 3, Side::Long), 1.0);
    EXPECT_EQ(ndcg_at_k(labels, s, 3, Side::Short), 1.0);
  }
  EXPECT_EQ(ndcg_at_k(std::vector<int>(5, 4), std::vector<double>{5, 4, 3, 2, 1}, 3, Side::Long), 1.0);
  EXPECT_EQ(ndcg_at_k(std::vector<int>(5, 0), std::vector<double>{5, 4, 3, 2, 1}, 3, Side::Long), 1.0);
}

TEST(Ndcg, ReversedFourItems) {
  const std::vector<int> labels{3, 2, 1, 0};
  const std::vector<double> s{0, 1, 2, 3};
  // gains 7,3,1,0 visited as 0,1,3 (k=3): (0 + 1/log2 3 + 3/2) / (7 + 3/log2 3 + 1/2)
  const double want = (1.0 / std::log2(3.0) + 1.5) / (7.0 + 3.0 / std::log2(3.0) + 0.5);
  EXPECT_NEAR(ndcg_at_k(labels, s, 3, Side::Long), want, 1e-15);
  EXPECT_NEAR(ndcg_at_k(labels, s, 3, Side::Long), ndcg_bruteforce(labels, s, 3, Side::Long), 1e-15);
}

TEST(Ndcg, InvariantToIncreasingTransforms) {
  nk::Rng r(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels(31);
    for (auto& l : labels) l = static_cast<int>(r.below(10));
    std::vector<double> s(31), t(31);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = r.normal();
      t[i] = std::exp(2.0 * s[i]) + 3.0;
    }
    for (Side side : {Side::Long, Side::Short})
      EXPECT_EQ(ndcg_at_k(labels, s, 3, side), ndcg_at_k(labels, t, 3, side));
  }
}

TEST(Ndcg, Errors) {
  EXPECT_THROW(ndcg_at_k(std::vector<int>{1, 2}, std::vector<double>{1, 2}, 3, Side::Long), MetricError);
  EXPECT_THROW(ndcg_at_k(std::vector<int>{1, 2}, std::vector<double>{1}, 1, Side::Long), MetricError);
  EXPECT_THROW(ndcg_at_k(std::vector<int>{1}, std::vector<double>{1}, 0, Side::Long), MetricError);
  const std::vector<std::size_t> bad{0, 5, 1};
  EXPECT_THROW(ndcg_of_order(std::vector<int>{1, 2, 3}, bad, 3, Side::Long), MetricError);
}

TEST(Performance, TrivialCases) {
  const auto up = performance_summary(std::vector<double>(20, 0.001));
  EXPECT_EQ(up.hit_rate, 1.0);
  EXPECT_EQ(up.max_drawdown, 0.0);
  EXPECT_FALSE(up.calmar.has_value());
  EXPECT_FALSE(up.sharpe.has_value());
  EXPECT_FALSE(up.ap_al.has_value());

  const auto sym = performance_summary(std::vector<double>{0.01, -0.01});
  ASSERT_TRUE(sym.ap_al.has_value());
  EXPECT_DOUBLE_EQ(*sym.ap_al, 1.0);
  EXPECT_EQ(sym.hit_rate, 0.5);
  EXPECT_THROW(performance_summary(std::vector<double>{0.01}), MetricError);
}

TEST(Performance, MatchesIndependentRecomputation) {
  nk::Rng r(5);
  std::vector<double> x(252);
  for (auto& v : x) v = 0.0004 + 0.006 * r.normal();
  const auto s = performance_summary(x);

  // column-by-column, the way a spreadsheet would lay it out
  const double n = 252;
  const double avg = mean(x);
  std::vector<double> dev2, neg2, pos, neg, wealth;
  double w = 1;
  for (double v : x) {
    dev2.push_back((v - avg) * (v - avg));
    neg2.push_back(v < 0 ? v * v : 0.0);
    if (v > 0) pos.push_back(v);
    if (v < 0) neg.push_back(v);
    w *= 1 + v;
    wealth.push_back(w);
  }
  double mdd = 0;
  for (std::size_t i = 0; i < wealth.size(); ++i) {
    const double peak = std::max(1.0, *std::max_element(wealth.begin(), wealth.begin() + i + 1));
    mdd = std::max(mdd, (peak - wealth[i]) / peak);
  }
  const double er = avg * 261;
  const double vol = std::sqrt(std::accumulate(dev2.begin(), dev2.end(), 0.0) / (n - 1)) * std::sqrt(261.0);
  const double dd = std::sqrt(261.0 * std::accumulate(neg2.begin(), neg2.end(), 0.0) / n);

  EXPECT_EQ(s.observations, 252u);
  EXPECT_NEAR(s.expected_return, er, 1e-10);
  EXPECT_NEAR(s.volatility, vol, 1e-10);
  EXPECT_NEAR(*s.sharpe, er / vol, 1e-10);
  EXPECT_NEAR(s.downside_deviation, dd, 1e-10);
  EXPECT_NEAR(s.max_drawdown, mdd, 1e-10);
  EXPECT_NEAR(*s.sortino, er / dd, 1e-10);
  EXPECT_NEAR(*s.calmar, er / mdd, 1e-10);
  EXPECT_NEAR(s.hit_rate, pos.size() / n, 1e-10);
  EXPECT_NEAR(*s.ap_al, mean(pos) / std::abs(mean(neg)), 1e-10);
}

TEST(Performance, ScaleEquivariance) {
  nk::Rng r(6);
  std::vector<double> x(500);
  for (auto& v : x) v = 0.0003 + 0.005 * r.normal();
  const auto a = performance_summary(x);
  for (double c : {0.5, 2.0, 7.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= c;
    const auto b = performance_summary(y);
    EXPECT_NEAR(b.expected_return, c * a.expected_return, 1e-12);
    EXPECT_NEAR(b.volatility, c * a.volatility, 1e-12);
    EXPECT_NEAR(b.downside_deviation, c * a.downside_deviation, 1e-12);
    EXPECT_NEAR(*b.sharpe, *a.sharpe, 1e-12);
    EXPECT_NEAR(*b.sortino, *a.sortino, 1e-12);
    EXPECT_EQ(b.hit_rate, a.hit_rate);
  }
}

TEST(Performance, BoundsOnRandomSeries) {
  nk::Rng r(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(100);
    for (auto& v : x) v = 0.05 * r.normal();
    const auto s = performance_summary(x);
    EXPECT_GE(s.volatility, 0.0);
    EXPECT_GE(s.max_drawdown, 0.0);
    EXPECT_LE(s.max_drawdown, 1.0);
    EXPECT_GE(s.hit_rate, 0.0);
    EXPECT_LE(s.hit_rate, 1.0);
    EXPECT_DOUBLE_EQ(*s.sharpe, s.expected_return / s.volatility);
  }
}

namespace {

Date day(int i) { return Date{std::chrono::sys_days{std::chrono::days{i}}}; }

}  // namespace

TEST(Regime, FourDaysOneRiskOff) {
  MarketStateSeries st;
  st.dates = {day(1), day(2), day(3), day(4)};
  st.states = {MarketState::Normal, MarketState::Normal, MarketState::RiskOff, MarketState::Normal};
  const std::vector<Date> dates{day(0), day(1), day(2), day(3), day(4)};
  const std::vector<double> r{0.5, 0.01, -0.02, 0.03, 0.005};
  const std::vector<double> g{0.0, 0.9, 0.5, 0.2, 0.7};
  const auto b = regime_breakdown(dates, r, g, st);
  EXPECT_EQ(b.excluded, 1u);
  ASSERT_TRUE(b.normal && b.risk_off);
  EXPECT_EQ(b.normal->count, 3u);
  EXPECT_EQ(b.risk_off->count, 1u);

  // normal returns 0.01, -0.02, 0.005: mean -0.005/3
  const double mu = -0.005 / 3;
  const double ss = std::pow(0.01 - mu, 2) + std::pow(-0.02 - mu, 2) + std::pow(0.005 - mu, 2);
  EXPECT_NEAR(*b.normal->sharpe, mu * std::sqrt(261.0) / std::sqrt(ss / 2), 1e-12);
  EXPECT_NEAR(*b.normal->mean_ndcg, 0.7, 1e-15);
  EXPECT_FALSE(b.risk_off->sharpe.has_value());
  EXPECT_EQ(*b.risk_off->mean_ndcg, 0.2);

  const auto no_ndcg = regime_breakdown(dates, r, {}, st);
  EXPECT_FALSE(no_ndcg.normal->mean_ndcg.has_value());
  EXPECT_THROW(regime_breakdown(dates, std::vector<double>{1.0}, {}, st), MetricError);
}

TEST(Regime, AllNormalEqualsUnconditional) {
  nk::Rng r(8);
  MarketStateSeries st;
  std::vector<Date> dates;
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) {
    dates.push_back(day(i));
    st.dates.push_back(day(i));
    st.states.push_back(MarketState::Normal);
    x.push_back(0.001 + 0.01 * r.normal());
  }
  const auto b = regime_breakdown(dates, x, {}, st);
  EXPECT_FALSE(b.risk_off.has_value());
  EXPECT_EQ(b.normal->count, 300u);
  EXPECT_NEAR(*b.normal->sharpe, *performance_summary(x).sharpe, 1e-12);
}

TEST(Regime, PartitionsAreExhaustive) {
  nk::Rng r(9);
  MarketStateSeries st;
  std::vector<Date> dates;
  std::vector<double> x;
  for (int i = 0; i < 200; ++i) {
    dates.push_back(day(i));
    x.push_back(r.normal());
    if (i >= 20) {
      st.dates.push_back(day(i));
      st.states.push_back(r.uniform() < 0.1 ? MarketState::RiskOff : MarketState::Normal);
    }
  }
  const auto b = regime_breakdown(dates, x, {}, st);
  EXPECT_EQ(b.excluded + b.normal->count + b.risk_off->count, 200u);
  EXPECT_EQ(b.excluded, 20u);
}
