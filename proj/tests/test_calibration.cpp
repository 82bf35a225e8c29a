#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "calibration_fixtures.hpp"
#include "rlhedge/calibration.hpp"
#include "rlhedge/errors.hpp"

using namespace rlhedge;

TEST(Calibration, BsRecoversSigma) {
    const auto slice = fixtures::synthetic_chain(BsParams{0.2}, {28}, {0.9, 0.95, 1.0, 1.05, 1.1});
    const auto res = calibrate(slice, ModelKind::BS);
    EXPECT_NEAR(std::get<BsParams>(res.model).sigma, 0.2, 1e-6);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.n_quotes, 5);
    EXPECT_LE(res.objective, res.initial_objective);
}

TEST(Calibration, JdRecoversParameters) {
    const JdParams truth{0.15, 0.8, -0.05, 0.1};
    const auto slice = fixtures::synthetic_chain(truth, fixtures::kChainDays, fixtures::kChainMoneyness);
    const auto res = calibrate(slice, ModelKind::JD);
    const auto& fit = std::get<JdParams>(res.model);
    EXPECT_LT(res.objective, 1e-10);
    EXPECT_NEAR(fit.sigma, truth.sigma, 1e-3);
    EXPECT_NEAR(fit.jump_intensity, truth.jump_intensity, 1e-3);
    EXPECT_NEAR(fit.jump_mean_log, truth.jump_mean_log, 1e-3);
    EXPECT_NEAR(fit.jump_std_log, truth.jump_std_log, 1e-3);
}

TEST(Calibration, HestonRecoversParameters) {
    const HestonParams truth{0.05, 2.0, 0.03, 0.6, -0.6};
    const auto slice = fixtures::synthetic_chain(truth, fixtures::kChainDays, fixtures::kChainMoneyness);
    const auto res = calibrate(slice, ModelKind::Heston);
    EXPECT_LT(res.objective, 1e-10);
    const Eigen::VectorXd err = (to_vector(res.model) - to_vector(truth)).cwiseAbs();
    EXPECT_LT(err.maxCoeff(), 1e-3) << err.transpose();
}

TEST(Calibration, TooFewQuotes) {
    const auto one = fixtures::synthetic_chain(BsParams{0.2}, {28}, {1.0});
    EXPECT_THROW(calibrate(one, ModelKind::Heston), InsufficientDataError);
    EXPECT_THROW(calibrate(one, ModelKind::JD), InsufficientDataError);
    EXPECT_NO_THROW(calibrate(one, ModelKind::BS));
    EXPECT_THROW(calibrate(OptionSlice{}, ModelKind::BS), InsufficientDataError);
}

TEST(Calibration, Deterministic) {
    const auto slice = fixtures::synthetic_chain(JdParams{0.2, 1.0, -0.1, 0.15}, {14, 28}, {0.95, 1.0, 1.05});
    const auto a = calibrate(slice, ModelKind::JD);
    const auto b = calibrate(slice, ModelKind::JD);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.converged, b.converged);
    EXPECT_TRUE((to_vector(a.model).array() == to_vector(b.model).array()).all());
}

TEST(Calibration, NoisyChainStillConverges) {
    auto slice = fixtures::synthetic_chain(BsParams{0.3}, {7, 21}, {0.9, 1.0, 1.1});
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (auto& q : slice.quotes) q.mid_price *= 1.0 + u(gen);
    const auto res = calibrate(slice, ModelKind::BS);
    EXPECT_GT(res.objective, 0.0);
    EXPECT_LE(res.objective, res.initial_objective);
    EXPECT_NEAR(std::get<BsParams>(res.model).sigma, 0.3, 0.02);
}

TEST(NelderMead, BestValueNeverIncreases) {
    const auto rosen = [](const Eigen::VectorXd& x) {
        return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
    };
    Eigen::VectorXd x0(2), lo(2), hi(2);
    x0 << -1.2, 1.0;
    lo << -5, -5;
    hi << 5, 5;
    const auto res = nelder_mead(rosen, x0, lo, hi, 0.5, 5000, 1e-24);
    ASSERT_FALSE(res.best_history.empty());
    for (std::size_t i = 1; i < res.best_history.size(); ++i) EXPECT_LE(res.best_history[i], res.best_history[i - 1]);
    EXPECT_NEAR(res.x(0), 1.0, 1e-5);
    EXPECT_NEAR(res.x(1), 1.0, 1e-5);
    EXPECT_TRUE(res.converged);
}

TEST(NelderMead, RespectsBox) {
    // Unconstrained minimum at (3, -3) lies outside the unit box.
    const auto f = [](const Eigen::VectorXd& x) { return std::pow(x(0) - 3, 2) + std::pow(x(1) + 3, 2); };
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(2, 0.5);
    const auto res = nelder_mead(f, x0, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), 0.1, 2000, 1e-20);
    EXPECT_NEAR(res.x(0), 1.0, 1e-8);
    EXPECT_NEAR(res.x(1), 0.0, 1e-8);
}

TEST(NelderMead, NonFiniteTreatedAsInfinity) {
    const auto f = [](const Eigen::VectorXd& x) { return x(0) < 0.2 ? std::nan("") : std::pow(x(0) - 0.5, 2); };
    const auto res = nelder_mead(f, Eigen::VectorXd::Constant(1, 0.9), Eigen::VectorXd::Zero(1),
                                 Eigen::VectorXd::Ones(1), 0.3, 1000, 1e-20);
    EXPECT_NEAR(res.x(0), 0.5, 1e-8);
}

TEST(Halton, FirstPoints) {
    const auto p1 = halton_point(1, 3);
    EXPECT_DOUBLE_EQ(p1(0), 0.5);
    EXPECT_DOUBLE_EQ(p1(1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(p1(2), 0.2);
    const auto p2 = halton_point(2, 2);
    EXPECT_DOUBLE_EQ(p2(0), 0.25);
    EXPECT_DOUBLE_EQ(p2(1), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(halton_point(3, 1)(0), 0.75);
}

TEST(Buckets, Boundaries) {
    EXPECT_EQ(bucket_assign(14), 14);
    EXPECT_EQ(bucket_assign(28), 28);
    EXPECT_EQ(bucket_assign(41), 28);
    EXPECT_EQ(bucket_assign(42), 56);
    EXPECT_EQ(bucket_assign(3), 14);
    EXPECT_EQ(bucket_assign(20), 14);
    EXPECT_EQ(bucket_assign(21), 28);
    EXPECT_EQ(bucket_assign(70), 56);
    EXPECT_FALSE(bucket_assign(2).has_value());
    EXPECT_FALSE(bucket_assign(71).has_value());
}

TEST(Buckets, SliceFilter) {
    const auto slice = fixtures::synthetic_chain(BsParams{0.2}, {10, 30, 60}, {1.0, 1.05});
    EXPECT_EQ(bucket_slice(slice, 14).quotes.size(), 2u);
    EXPECT_EQ(bucket_slice(slice, 28).quotes.size(), 2u);
    EXPECT_EQ(bucket_slice(slice, 56).quotes.size(), 2u);
    EXPECT_EQ(bucket_slice(slice, 28).quotes[0].tau_days, 30);
}
