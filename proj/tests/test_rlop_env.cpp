#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rlhedge/errors.hpp"
#include "rlhedge/pricers.hpp"
#include "rlhedge/rlop_env.hpp"
#include "rlhedge/rng.hpp"

using namespace rlhedge;
using Eigen::VectorXd;

namespace {

RlopConfig two_month_config(double sigma, int steps, PenaltyKind pen = PenaltyKind::AbsError) {
    RlopConfig c;
    c.gbm.mu = 0.04;
    c.gbm.r = 0.04;
    c.gbm.sigma = sigma;
    c.gbm.s0 = 1.0;
    c.gbm.horizon_steps = steps;
    c.gbm.dt = (2.0 / 12.0) / steps;
    c.strike = 1.0;
    c.penalty = pen;
    return c;
}

// Constant-mean policy on the (t/T, x, i/T) state.
PolicyCheckpoint constant_policy(double mean) {
    PolicyCheckpoint ck;
    ck.method = "rlop";
    ck.policy_spec.input_dim = 3;
    ck.policy_spec.hidden_width = 4;
    ck.policy_spec.n_residual_blocks = 1;
    ck.policy = init_params(ck.policy_spec, 1, -2.0);
    ck.policy(param_layout(ck.policy_spec).b_out) = mean;
    return ck;
}

double bs_delta(const GbmParams& g, double strike, double spot, int steps_left) {
    const double tau = steps_left * g.dt;
    const ForwardQuote q{spot * std::exp(g.r * tau), std::exp(-g.r * tau)};
    const OptionContract k{strike, steps_left, tau, true};
    return black76_delta(q, k, g.sigma, spot);
}

// Black-Scholes delta for each decision of the batch, maturity-aware.
VectorXd bs_actions(const RlopEnv& env, const EpisodeBatch& batch) {
    const auto& g = env.config().gbm;
    const int T = g.horizon_steps;
    VectorXd a(batch.states.cols());
    const int per = env.decisions_per_path();
    for (int p = 0; p < batch.n_paths; ++p) {
        int k = p * per;
        for (int i = 1; i <= T; ++i)
            for (int t = 0; t < i; ++t) a(k++) = bs_delta(g, env.config().strike, batch.paths(p, t), i - t);
    }
    return a;
}

}  // namespace

TEST(Penalty, HandCases) {
    EXPECT_EQ(penalty(PenaltyKind::AbsError, 3.0, 5.0), -2.0);
    EXPECT_EQ(penalty(PenaltyKind::SquaredError, 3.0, 5.0), -4.0);
    EXPECT_EQ(penalty(PenaltyKind::AbsError, 3.0, 3.0), 0.0);
    EXPECT_EQ(penalty(PenaltyKind::SquaredError, 3.0, 3.0), 0.0);
    EXPECT_EQ(penalty(PenaltyKind::AbsError, 5.0, 3.0), -2.0);
}

TEST(ForwardStep, HandCases) {
    EXPECT_EQ(forward_step(7.0, 0.0, 0.0, 100.0, 120.0, 0.0, 1.0, 0.0), 7.0);
    EXPECT_DOUBLE_EQ(forward_step(0.0, 1.0, 1.0, 100.0, 110.0, 0.0, 1.0, 0.0), 10.0);
    const double frictionless = forward_step(0.0, 1.0, 3.0, 100.0, 110.0, 0.0, 1.0, 0.0);
    const double costly = forward_step(0.0, 1.0, 3.0, 100.0, 110.0, 0.0, 1.0, 0.001);
    EXPECT_NEAR(frictionless - costly, 0.22, 1e-14);
    // Cash accrues at the riskless rate.
    EXPECT_NEAR(forward_step(1.0, 0.0, 0.0, 1.0, 1.0, 0.05, 0.5, 0.0), std::exp(0.025), 1e-15);
    EXPECT_THROW(forward_step(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0), ParameterError);
}

TEST(RolloutStacked, DeterministicPathReplicatesExactly) {
    RlopConfig c;
    c.gbm.sigma = 0.0;
    c.gbm.mu = 0.1;
    c.gbm.r = 0.0;
    c.gbm.s0 = 1.0;
    c.gbm.horizon_steps = 6;
    c.gbm.dt = 1.0 / 12.0;
    c.strike = 0.9;
    const VectorXd path = simulate_path(c.gbm, 3).prices;
    const auto port = rollout_stacked(c, path, [](int, int, double) { return 1.0; }, VectorXd::Constant(6, 0.1));
    for (int i = 1; i <= 6; ++i) {
        EXPECT_NEAR(port.pi[i - 1](i), path(i) - 0.9, 1e-14);
        EXPECT_NEAR(port.rewards(i - 1), 0.0, 1e-14);
    }
}

TEST(RolloutStacked, MaturityFreezeAndShapes) {
    auto c = two_month_config(0.2, 5);
    const VectorXd path = simulate_path(c.gbm, 9).prices;
    int calls = 0;
    const auto hedge = [&](int t, int i, double x) {
        EXPECT_LT(t, i);
        EXPECT_GE(t, 0);
        EXPECT_LE(i, 5);
        EXPECT_DOUBLE_EQ(x, normalized_log_price(c.gbm, t, path(t)));
        ++calls;
        return 0.3 + 0.1 * t - 0.05 * i;
    };
    const auto port = rollout_stacked(c, path, hedge, VectorXd::Zero(5));
    EXPECT_EQ(calls, 15);
    ASSERT_EQ(port.pi.size(), 5u);
    for (int i = 1; i <= 5; ++i) {
        EXPECT_EQ(port.pi[i - 1].size(), i + 1);
        EXPECT_EQ(port.hedges[i - 1].size(), i);
        EXPECT_LE(port.rewards(i - 1), 0.0);
    }
    EXPECT_THROW(rollout_stacked(c, path.head(4), hedge, VectorXd::Zero(5)), ParameterError);
    EXPECT_THROW(rollout_stacked(c, path, hedge, VectorXd::Zero(4)), ParameterError);
}

TEST(RolloutStacked, PortfolioFollowsForwardRecursion) {
    auto c = two_month_config(0.3, 4);
    c.epsilon_tc = 0.004;
    const VectorXd path = simulate_path(c.gbm, 21).prices;
    const auto hedge = [](int t, int i, double) { return 0.2 * t + 0.1 * i; };
    const VectorXd w0 = VectorXd::LinSpaced(4, 0.01, 0.04);
    const auto port = rollout_stacked(c, path, hedge, w0);
    for (int i = 1; i <= 4; ++i) {
        double pi = w0(i - 1);
        EXPECT_EQ(port.pi[i - 1](0), pi);
        for (int t = 0; t < i; ++t) {
            const double u_next = t + 1 < i ? hedge(t + 1, i, 0.0) : hedge(t, i, 0.0);
            pi = forward_step(pi, hedge(t, i, 0.0), u_next, path(t), path(t + 1), c.gbm.r, c.gbm.dt, c.epsilon_tc);
            EXPECT_DOUBLE_EQ(port.pi[i - 1](t + 1), pi);
        }
        EXPECT_DOUBLE_EQ(port.rewards(i - 1), -std::abs(std::max(path(i) - 1.0, 0.0) - pi));
    }
}

TEST(RlopEnv, DecisionLayout) {
    auto c = two_month_config(0.2, 4);
    RlopEnv env(c);
    EXPECT_EQ(env.decisions_per_path(), 10);
    const auto batch = env.sample(3, 2);
    ASSERT_EQ(batch.states.rows(), 3);
    ASSERT_EQ(batch.states.cols(), 20);
    int k = 10;  // second path
    for (int i = 1; i <= 4; ++i)
        for (int t = 0; t < i; ++t, ++k) {
            EXPECT_DOUBLE_EQ(batch.states(0, k), t / 4.0);
            EXPECT_DOUBLE_EQ(batch.states(1, k), normalized_log_price(c.gbm, t, batch.paths(1, t)));
            EXPECT_DOUBLE_EQ(batch.states(2, k), i / 4.0);
        }
}

TEST(RlopEnv, RolloutMatchesStackedPortfolio) {
    auto c = two_month_config(0.2, 5);
    c.epsilon_tc = 0.002;
    RlopEnv env(c);
    const VectorXd w0 = VectorXd::LinSpaced(5, 0.01, 0.03);
    env.set_extra_params(w0);
    const auto batch = env.sample(17, 6);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n(0.5, 0.2);
    VectorXd a(batch.states.cols());
    for (auto& v : a) v = n(gen);
    const auto out = env.rollout(batch, a);
    double total = 0.0;
    for (int p = 0; p < 6; ++p) {
        const int base = p * 15;
        const auto hedge = [&](int t, int i, double) { return a(base + (i - 1) * i / 2 + t); };
        const auto port = rollout_stacked(c, batch.paths.row(p).transpose(), hedge, w0);
        for (int i = 1; i <= 5; ++i) {
            for (int t = 0; t < i; ++t) EXPECT_EQ(out.returns(base + (i - 1) * i / 2 + t), port.rewards(i - 1));
            total += port.rewards(i - 1);
        }
    }
    EXPECT_NEAR(out.mean_return, total / 30.0, 1e-15);
}

TEST(RlopEnv, InitialWealthGradientMatchesFiniteDifference) {
    for (auto pen : {PenaltyKind::SquaredError, PenaltyKind::AbsError}) {
        auto c = two_month_config(0.25, 4, pen);
        c.epsilon_tc = 0.001;
        RlopEnv env(c);
        const VectorXd w0 = VectorXd::LinSpaced(4, 0.01, 0.04);
        env.set_extra_params(w0);
        const auto batch = env.sample(5, 50);
        const VectorXd a = bs_actions(env, batch);
        const VectorXd grad = env.rollout(batch, a).extra_grad;
        ASSERT_EQ(grad.size(), 4);
        const double h = 1e-7;
        for (int i = 0; i < 4; ++i) {
            VectorXd up = w0, dn = w0;
            up(i) += h;
            dn(i) -= h;
            env.set_extra_params(up);
            const double fu = env.rollout(batch, a).mean_return;
            env.set_extra_params(dn);
            const double fd = env.rollout(batch, a).mean_return;
            EXPECT_NEAR(grad(i), (fu - fd) / (2 * h), 1e-6);
        }
    }
}

TEST(RlopEnv, FixedInitialWealthIsNotTrained) {
    auto c = two_month_config(0.2, 3);
    c.premium_mode = PremiumMode::FixedInitialWealth;
    c.fixed_w0 = 0.02;
    RlopEnv env(c);
    EXPECT_TRUE(env.extra_params().isApprox(VectorXd::Constant(3, 0.02)));
    env.set_extra_params(VectorXd::Constant(3, 0.5));
    EXPECT_TRUE(env.extra_params().isApprox(VectorXd::Constant(3, 0.02)));
    const auto batch = env.sample(1, 10);
    EXPECT_TRUE(env.rollout(batch, VectorXd::Zero(batch.states.cols())).extra_grad.isZero());
}

// Terminal wealth is affine in w0 with slope exp(r T dt), so the cost of
// replication does not depend on the starting wealth.
TEST(RlopEnv, ReplicationCostsAreWealthFree) {
    auto c = two_month_config(0.2, 6);
    RlopEnv env(c);
    const auto batch = env.sample(44, 20);
    const VectorXd a = bs_actions(env, batch);
    const VectorXd costs = env.replication_costs(batch, a);
    const int per = env.decisions_per_path();
    const double growth = std::exp(c.gbm.r * c.gbm.horizon_years());
    for (int p = 0; p < 20; ++p) {
        const auto hedge = [&](int t, int i, double) { return a(p * per + (i - 1) * i / 2 + t); };
        const VectorXd w0 = VectorXd::Constant(6, 0.037);
        const auto port = rollout_stacked(c, batch.paths.row(p).transpose(), hedge, w0);
        const double payoff = std::max(batch.paths(p, 6) - 1.0, 0.0);
        EXPECT_NEAR(costs(p), (payoff - port.pi[5](6)) / growth + 0.037, 1e-13);
    }
}

TEST(RlopPrice, SquaredPenaltyMatchesBlackScholes) {
    auto c = two_month_config(0.2, 8, PenaltyKind::SquaredError);
    RlopEnv env(c);
    const auto batch = env.sample(8, 20000);
    const auto est = env.price(batch, bs_actions(env, batch));
    const double tau = c.gbm.horizon_years();
    OptionContract k{1.0, 8, tau, true};
    const double bs = black76_price({std::exp(c.gbm.r * tau), std::exp(-c.gbm.r * tau)}, k, 0.2);
    EXPECT_NEAR(est.price, bs, 3.0 * est.se);
    EXPECT_LT(est.se, 0.002);
}

TEST(RlopPrice, MedianAndMeanOfCosts) {
    auto c = two_month_config(0.2, 4);
    RlopEnv env(c);
    const auto batch = env.sample(2, 101);
    const VectorXd a = VectorXd::Constant(batch.states.cols(), 0.5);
    VectorXd costs = env.replication_costs(batch, a);
    const auto abs_est = env.price(batch, a);
    std::sort(costs.data(), costs.data() + costs.size());
    EXPECT_EQ(abs_est.price, costs(50));
    auto sq = c;
    sq.penalty = PenaltyKind::SquaredError;
    RlopEnv env_sq(sq);
    EXPECT_NEAR(env_sq.price(batch, a).price, costs.mean(), 1e-15);
    EXPECT_NEAR(abs_est.se, std::sqrt(std::acos(-1.0) / 2.0) * env_sq.price(batch, a).se, 1e-15);
}

TEST(RlopPrice, DeterministicPathPrice) {
    RlopConfig c;
    c.gbm.sigma = 0.0;
    c.gbm.mu = 0.0;
    c.gbm.r = 0.0;
    c.gbm.s0 = 1.0;
    c.gbm.horizon_steps = 4;
    c.gbm.dt = 0.01;
    c.strike = 0.8;
    const auto res = rlop_price(c, constant_policy(1.0), 10, 5);
    EXPECT_NEAR(res.estimate.price, 0.2, 1e-14);
    EXPECT_NEAR(res.estimate.se, 0.0, 1e-14);
}

TEST(RlopPrice, BisectionBracketsTolerance) {
    auto c = two_month_config(0.2, 4);
    const auto ck = constant_policy(0.5);
    RlopEnv env(c);
    const auto batch = env.sample(derive_seed(9, "eval"), 2000);
    const VectorXd costs = env.replication_costs(batch, VectorXd::Constant(batch.states.cols(), 0.5));
    const double growth = std::exp(c.gbm.r * c.gbm.horizon_years());
    const auto mean_pen = [&](double w) { return (growth * (costs.array() - w)).abs().mean(); };

    const double best = rlop_price(c, ck, 2000, 9).estimate.price;
    const double floor = mean_pen(best);
    EXPECT_THROW(rlop_price_bisection(c, ck, 0.9 * floor, 2000, 9), NoSolutionError);
    double prev = best + 1.0;
    for (double slack : {1.01, 1.1, 1.5}) {
        const double w = rlop_price_bisection(c, ck, slack * floor, 2000, 9);
        EXPECT_LE(w, best);
        EXPECT_LT(w, prev);
        EXPECT_NEAR(mean_pen(w), slack * floor, 1e-10);
        prev = w;
    }
}

TEST(RlopEnv, ConfigJsonRoundTrip) {
    auto c = two_month_config(0.3, 8, PenaltyKind::SquaredError);
    c.epsilon_tc = 0.001;
    c.premium_mode = PremiumMode::FixedInitialWealth;
    c.fixed_w0 = 0.05;
    const auto back = rlop_config_from_json(RlopEnv(c).config_json());
    EXPECT_EQ(back.gbm.sigma, 0.3);
    EXPECT_EQ(back.strike, 1.0);
    EXPECT_EQ(back.epsilon_tc, 0.001);
    EXPECT_EQ(back.penalty, PenaltyKind::SquaredError);
    EXPECT_EQ(back.premium_mode, PremiumMode::FixedInitialWealth);
    EXPECT_EQ(back.fixed_w0, 0.05);
    auto j = RlopEnv(c).config_json();
    j["penalty"] = "huber";
    EXPECT_THROW(rlop_config_from_json(j), DataError);
}

TEST(RlopDelta, ReadsPolicyMean) {
    EXPECT_DOUBLE_EQ(rlop_delta(constant_policy(0.7), {2, 0.0}, 5, 8), 0.7);
    EXPECT_THROW(rlop_delta(constant_policy(0.7), {2, 0.0}, 9, 8), ParameterError);
    EXPECT_THROW(rlop_delta(constant_policy(0.7), {2, 0.0}, 0, 8), ParameterError);
}
