#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rlhedge/errors.hpp"
#include "rlhedge/pricers.hpp"
#include "rlhedge/riskmetrics.hpp"

using namespace rlhedge;

namespace {

// Sort, slice, average. alpha is given in whole percent so the ceiling index is
// integer arithmetic: ceil((100 - a) n / 100).
VarEs brute_force_es(const std::vector<double>& pnl, int alpha_pct) {
    std::vector<double> sf;
    for (double p : pnl) sf.push_back(std::max(0.0, -p));
    std::sort(sf.begin(), sf.end());
    const long n = static_cast<long>(sf.size());
    const long k = ((100 - alpha_pct) * n + 99) / 100;
    const double var = sf[static_cast<std::size_t>(k - 1)];
    double sum = 0.0;
    int count = 0;
    for (double s : sf)
        if (s >= var) {
            sum += s;
            ++count;
        }
    return {var, sum / count};
}

OptionQuote quote(double strike, double forward, double tau, double price) {
    OptionQuote q;
    q.contract.strike = strike;
    q.contract.tau_years = tau;
    q.forward_quote = {forward, 0.99};
    q.mid_price = price;
    q.tau_days = static_cast<int>(std::lround(tau * 365));
    return q;
}

}  // namespace

TEST(Shortfall, HandCases) {
    EXPECT_EQ(shortfall(-3.0), 3.0);
    EXPECT_EQ(shortfall(0.0), 0.0);
    EXPECT_EQ(shortfall(5.0), 0.0);
}

TEST(EsAlpha, HandCaseUnderCeilingConvention) {
    const std::vector<double> pnl{-3, -1, 0, 2, 5};
    const auto r = es_alpha(pnl, 0.2);
    EXPECT_EQ(r.var, 1.0);
    EXPECT_EQ(r.es, 2.0);
}

TEST(EsAlpha, DegenerateSamples) {
    const std::vector<double> one{-7.0};
    for (double a : {0.01, 0.05, 0.1, 0.5, 0.99}) {
        EXPECT_EQ(es_alpha(one, a).var, 7.0);
        EXPECT_EQ(es_alpha(one, a).es, 7.0);
    }
    const std::vector<double> gains{0.5, 1.0, 3.0, 0.0};
    EXPECT_EQ(es_alpha(gains, 0.05).var, 0.0);
    EXPECT_EQ(es_alpha(gains, 0.05).es, 0.0);
}

TEST(EsAlpha, Errors) {
    EXPECT_THROW(es_alpha(std::vector<double>{}, 0.05), InsufficientDataError);
    const std::vector<double> x{1.0};
    EXPECT_THROW(es_alpha(x, 0.0), ParameterError);
    EXPECT_THROW(es_alpha(x, 1.0), ParameterError);
}

TEST(EsAlpha, MatchesBruteForceOracleExactly) {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<int> size(1, 50);
    std::normal_distribution<double> z(0.0, 2.0);
    std::uniform_int_distribution<int> coarse(-4, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> pnl(static_cast<std::size_t>(size(gen)));
        // Every third sample uses integer values so ties at the VaR are common.
        for (double& p : pnl) p = trial % 3 == 0 ? coarse(gen) : z(gen);
        for (int a : {5, 10, 20, 25}) {
            const auto got = es_alpha(pnl, a / 100.0);
            const auto want = brute_force_es(pnl, a);
            ASSERT_EQ(got.var, want.var) << "trial " << trial << " alpha " << a;
            ASSERT_EQ(got.es, want.es) << "trial " << trial << " alpha " << a;
        }
    }
}

TEST(EsAlpha, TailOrderingOnEverySample) {
    std::mt19937_64 gen(3);
    std::student_t_distribution<double> t(3.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> pnl(1 + trial % 60);
        for (double& p : pnl) p = t(gen);
        const auto e05 = es_alpha(pnl, 0.05);
        const auto e10 = es_alpha(pnl, 0.10);
        ASSERT_GE(e05.es, e10.es);
        ASSERT_GE(e05.es, e05.var);
        ASSERT_GE(e10.es, e10.var);
        ASSERT_GE(e10.var, 0.0);
    }
}

TEST(ShortfallProb, CountsStrictLosses) {
    EXPECT_DOUBLE_EQ(shortfall_prob(std::vector<double>{-3, -1, 0, 2, 5}), 0.4);
    EXPECT_EQ(shortfall_prob(std::vector<double>{1, 2}), 0.0);
    EXPECT_EQ(shortfall_prob(std::vector<double>{0.0}), 0.0);
    std::mt19937_64 gen(5);
    std::normal_distribution<double> z;
    std::vector<double> x(777);
    for (double& v : x) v = z(gen);
    const auto losses = std::count_if(x.begin(), x.end(), [](double v) { return v < 0.0; });
    EXPECT_EQ(shortfall_prob(x), static_cast<double>(losses) / 777.0);
}

TEST(RmseXi, HandCases) {
    const auto zero = rmse_xi(std::vector<double>{0, 0, 0});
    EXPECT_EQ(zero.value, 0.0);
    EXPECT_EQ(zero.lo, 0.0);
    EXPECT_EQ(zero.hi, 0.0);
    EXPECT_NEAR(rmse_xi(std::vector<double>{3, 4}).value, 3.5355339059327378, 1e-15);
}

TEST(RmseXi, HomogeneousAndBracketed) {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> z(0.3, 1.0);
    std::vector<double> x(200), x2(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = z(gen);
        x2[i] = 2.0 * x[i];
    }
    const auto a = rmse_xi(x);
    const auto b = rmse_xi(x2);
    EXPECT_EQ(b.value, 2.0 * a.value);
    EXPECT_LE(a.lo, a.value);
    EXPECT_LE(a.value, a.hi);
    EXPECT_GE(a.lo, 0.0);
}

TEST(RiskCost, PointCarriesBothIntervals) {
    const std::vector<double> tc{0.1, 0.2, 0.3};
    const std::vector<double> xi{1.0, -1.0, 1.0};
    const auto p = risk_cost_point(tc, xi);
    EXPECT_NEAR(p.mean_tc.value, 0.2, 1e-15);
    // sample sd 0.1, se 0.1/sqrt(3)
    EXPECT_NEAR(p.mean_tc.hi - p.mean_tc.value, 1.959963984540054 * 0.1 / std::sqrt(3.0), 1e-15);
    EXPECT_EQ(p.rmse_xi.value, 1.0);
    EXPECT_EQ(p.n, 3);
    EXPECT_THROW(risk_cost_point(tc, std::vector<double>{1.0}), ParameterError);
}

TEST(Ecdf, StepPairs) {
    const auto a = ecdf(std::vector<double>{1.0});
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0], std::make_pair(1.0, 1.0));
    const auto b = ecdf(std::vector<double>{2.0, 1.0});
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0], std::make_pair(1.0, 0.5));
    EXPECT_EQ(b[1], std::make_pair(2.0, 1.0));
    const auto c = ecdf(std::vector<double>{3.0, 1.0, 3.0, 2.0});
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[2], std::make_pair(3.0, 1.0));
    EXPECT_EQ(c[1], std::make_pair(2.0, 0.5));
}

TEST(Ecdf, UniformDrawsWithinDkwBound) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u;
    std::vector<double> x(1000);
    for (double& v : x) v = u(gen);
    const auto e = ecdf(x);
    double worst = 0.0;
    double prev = 0.0;
    for (const auto& [v, p] : e) {
        worst = std::max({worst, std::abs(p - v), std::abs(prev - v)});
        prev = p;
    }
    EXPECT_LT(worst, 0.07);
    EXPECT_EQ(e.back().second, 1.0);
}

TEST(TailReport, CollectsTheSummaries) {
    const std::vector<double> pnl{-3, -1, 0, 2, 5};
    const auto r = tail_report(pnl);
    EXPECT_EQ(r.n_days, 5);
    EXPECT_DOUBLE_EQ(r.shortfall_prob, 0.4);
    EXPECT_EQ(r.tail_05.var, 3.0);
    EXPECT_EQ(r.tail_05.es, 3.0);
    EXPECT_EQ(r.ecdf.size(), 5u);
}

TEST(EqualDayMean, SingleDayUnchanged) {
    EXPECT_EQ(equal_day_mean(std::vector<double>{7.65}), 7.65);
    EXPECT_DOUBLE_EQ(equal_day_mean(std::vector<double>{1.0, 2.0, 6.0}), 3.0);
}

TEST(Ivrmse, ZeroOnOwnPrices) {
    OptionSlice s;
    for (double k : {0.9, 1.0, 1.1}) s.quotes.push_back(quote(k, 1.0, 0.1, 0.0));
    std::vector<double> model;
    for (auto& q : s.quotes) {
        q.mid_price = black76_price(q.forward_quote, q.contract, 0.25);
        model.push_back(q.mid_price);
    }
    const auto r = ivrmse_day(s, model);
    EXPECT_EQ(r.n_used, 3);
    EXPECT_LT(r.value, 1e-10);
}

TEST(Ivrmse, TwoContractsWithEqualGaps) {
    OptionSlice s;
    s.quotes.push_back(quote(0.95, 1.0, 0.2, 0.0));
    s.quotes.push_back(quote(1.05, 1.0, 0.2, 0.0));
    std::vector<double> model;
    for (auto& q : s.quotes) {
        q.mid_price = black76_price(q.forward_quote, q.contract, 0.20);
        model.push_back(black76_price(q.forward_quote, q.contract, 0.21));
    }
    EXPECT_NEAR(ivrmse_day(s, model).value, 1.0, 1e-8);
}

TEST(Ivrmse, DropsQuotesOutsideTheBandAndIgnoresOrder) {
    OptionSlice s;
    s.quotes.push_back(quote(0.9, 1.0, 0.2, 0.0));
    s.quotes.push_back(quote(1.0, 1.0, 0.2, 0.0));
    s.quotes.push_back(quote(1.1, 1.0, 0.2, 0.0));
    std::vector<double> model;
    for (std::size_t i = 0; i < s.quotes.size(); ++i) {
        auto& q = s.quotes[i];
        q.mid_price = black76_price(q.forward_quote, q.contract, 0.2 + 0.01 * static_cast<double>(i));
        model.push_back(black76_price(q.forward_quote, q.contract, 0.22));
    }
    model[0] = 5.0;  // above the discounted forward
    const auto r = ivrmse_day(s, model);
    EXPECT_EQ(r.n_used, 2);
    EXPECT_EQ(r.n_dropped, 1);

    OptionSlice rev = s;
    std::reverse(rev.quotes.begin(), rev.quotes.end());
    std::vector<double> model_rev(model.rbegin(), model.rend());
    EXPECT_NEAR(ivrmse_day(rev, model_rev).value, r.value, 1e-14);

    model[1] = model[2] = 5.0;
    EXPECT_THROW(ivrmse_day(s, model), InsufficientDataError);
    EXPECT_THROW(ivrmse_day(s, std::vector<double>{1.0}), ParameterError);
}

TEST(Ivrmse, MoneynessGroups) {
    const auto g = ivrmse_groups();
    ASSERT_EQ(g.size(), 4u);
    EXPECT_EQ(g[0].label, "Whole sample");
    EXPECT_EQ(g[3].label, "Moneyness >1.03");
    const auto atm = quote(1.0, 1.0, 0.1, 0.01);
    const auto otm = quote(1.04, 1.0, 0.1, 0.01);
    EXPECT_TRUE(g[0].keep(atm));
    EXPECT_FALSE(g[1].keep(atm));
    EXPECT_FALSE(g[2].keep(atm));
    EXPECT_TRUE(g[2].keep(otm));
    EXPECT_TRUE(g[3].keep(otm));
    EXPECT_TRUE(g[1].keep(quote(0.97, 1.0, 0.1, 0.01)));
}

TEST(Scorecard, SingleModelWinsEverything) {
    const auto rows = scorecard({{"XOP 2020Q1 ATM", "RLOP", 0.694, 0.5, 0.3, 20}});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].best_es_05, "RLOP");
    EXPECT_EQ(rows[0].best_es_10, "RLOP");
    EXPECT_EQ(rows[0].best_shortfall, "RLOP");
    EXPECT_EQ(rows[0].es_05, 0.694);
    EXPECT_EQ(rows[0].n_days, 20);
}

TEST(Scorecard, TwoModelFixtureAgainstSortOracle) {
    // Hand-built day outcomes for two models in two settings.
    const std::vector<double> a1{-2, -1, 0.5, 1, 3}, b1{-4, 0, 0.2, 0.1, 0.3};
    const std::vector<double> a2{-1, -1, 1}, b2{-0.5, 2, 2};
    std::vector<ScoreInput> in;
    for (const auto& [setting, model, pnl] :
         {std::tuple{"s1", "A", a1}, std::tuple{"s1", "B", b1}, std::tuple{"s2", "A", a2}, std::tuple{"s2", "B", b2}}) {
        const auto t = tail_report(pnl);
        in.push_back({setting, model, t.tail_05.es, t.tail_10.es, t.shortfall_prob, t.n_days});
    }
    const auto rows = scorecard(in);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& row : rows) {
        std::vector<const ScoreInput*> g;
        for (const auto& e : in)
            if (e.setting == row.setting) g.push_back(&e);
        const auto argmin = [&](double ScoreInput::*f) {
            return (*std::min_element(g.begin(), g.end(), [f](auto* x, auto* y) { return x->*f < y->*f; }))->model;
        };
        EXPECT_EQ(row.best_es_05, argmin(&ScoreInput::es_05)) << row.setting;
        EXPECT_EQ(row.best_es_10, argmin(&ScoreInput::es_10)) << row.setting;
        EXPECT_EQ(row.best_shortfall, argmin(&ScoreInput::shortfall_prob)) << row.setting;
    }
    EXPECT_EQ(rows[0].setting, "s1");
    EXPECT_EQ(rows[0].best_es_05, "A");  // 2 < 4
    EXPECT_EQ(rows[0].best_shortfall, "B");  // 0.2 < 0.4
}

TEST(Scorecard, TiesListedJointly) {
    const auto rows = scorecard({{"s", "SV", 0.5, 0.4, 0.2, 10}, {"s", "QLBS", 0.5, 0.3, 0.2, 12}, {"s", "BS", 0.6, 0.3, 0.3, 12}});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].best_es_05, "SV/QLBS");
    EXPECT_EQ(rows[0].best_es_10, "QLBS/BS");
    EXPECT_EQ(rows[0].best_shortfall, "SV/QLBS");
    EXPECT_EQ(rows[0].n_days, 12);
}
