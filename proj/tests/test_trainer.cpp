#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "rlhedge/errors.hpp"
#include "rlhedge/qlbs_env.hpp"
#include "rlhedge/rlop_env.hpp"
#include "rlhedge/rng.hpp"
#include "rlhedge/trainer.hpp"

using namespace rlhedge;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

TrainConfig small_config(int batches, std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.episodes_per_batch = 64;
    cfg.n_batches = batches;
    cfg.lr_policy = 2e-2;
    cfg.lr_value = 1e-2;
    cfg.hidden_width = 8;
    cfg.n_residual_blocks = 1;
    cfg.eval_paths = 100;
    cfg.early_stop = false;
    cfg.seed = seed;
    return cfg;
}

QlbsConfig qlbs_config(double lambda) {
    QlbsConfig c;
    c.gbm.mu = 0.04;
    c.gbm.r = 0.04;
    c.gbm.sigma = 0.2;
    c.gbm.horizon_steps = 4;
    c.gbm.dt = (2.0 / 12.0) / 4;
    c.contract = horizon_contract(c.gbm, 1.0);
    c.lambda_risk = lambda;
    return c;
}

// Bandit whose rollout fails every `period`-th call.
class FlakyBandit : public BanditEnv {
public:
    explicit FlakyBandit(int period) : period_(period) {}
    RolloutResult rollout(const EpisodeBatch& b, const VectorXd& a) const override {
        if (++calls_ % period_ == 0) throw NumericError("flaky");
        return BanditEnv::rollout(b, a);
    }

private:
    int period_;
    mutable int calls_ = 0;
};

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

}  // namespace

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.episodes_per_batch = 1;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = TrainConfig{};
    cfg.lr_policy = 0.0;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = TrainConfig{};
    cfg.grad_clip = -1.0;
    EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Train, BanditConvergesToTarget) {
    BanditEnv env(3.0);
    const auto rep = train(env, small_config(1500));
    EXPECT_EQ(rep.stop_reason, "completed");
    EXPECT_EQ(rep.skipped_batches, 0);
    EXPECT_NEAR(policy_mean(rep.checkpoint, VectorXd::Zero(1)), 3.0, 0.1);
    EXPECT_NEAR(rep.final_price.price, 3.0, 0.1);
}

TEST(Train, DeterministicForFixedSeed) {
    QlbsEnv env_a(qlbs_config(0.1)), env_b(qlbs_config(0.1)), env_c(qlbs_config(0.1));
    auto cfg = small_config(20, 7);
    const auto a = train(env_a, cfg);
    const auto b = train(env_b, cfg);
    EXPECT_EQ(a.checkpoint.policy, b.checkpoint.policy);
    EXPECT_EQ(a.checkpoint.value, b.checkpoint.value);
    EXPECT_EQ(a.final_price.price, b.final_price.price);
    cfg.seed = 8;
    const auto c = train(env_c, cfg);
    EXPECT_NE(a.checkpoint.policy, c.checkpoint.policy);
}

// For a state-free Gaussian policy and reward -(a - 3)^2,
// d/dmu E r = -2 (mu - 3) and d/dlog sigma E r = -2 sigma^2.
TEST(PolicyGradient, UnbiasedScoreFunctionEstimate) {
    NetSpec spec;
    spec.input_dim = 1;
    spec.hidden_width = 4;
    spec.n_residual_blocks = 1;
    ParamVector params = init_params(spec, 2, std::log(0.5));
    const auto layout = param_layout(spec);
    params(layout.b_out) = 1.0;  // mean
    const double mu = 1.0, sigma = 0.5;

    const int n = 200000;
    const MatrixXd states = MatrixXd::Zero(1, n);
    NormalRng rng(99);
    VectorXd actions(n), rewards(n);
    for (int k = 0; k < n; ++k) {
        actions(k) = mu + sigma * rng.normal();
        rewards(k) = -(actions(k) - 3.0) * (actions(k) - 3.0);
    }
    const ParamVector g = policy_gradient(spec, params, states, actions, rewards);
    // Per-sample terms give the standard error of each component.
    const VectorXd z = (actions.array() - mu) / sigma;
    const VectorXd t_mu = rewards.array() * z.array() / sigma;
    const VectorXd t_ls = rewards.array() * (z.array().square() - 1.0);
    const auto se = [&](const VectorXd& t) {
        return std::sqrt((t.array() - t.mean()).square().sum() / (n - 1.0) / n);
    };
    EXPECT_NEAR(g(layout.b_out), t_mu.mean(), 1e-10);
    EXPECT_NEAR(g(layout.b_out), -2.0 * (mu - 3.0), 3.0 * se(t_mu));
    EXPECT_NEAR(g(layout.b_out + 1), -2.0 * sigma * sigma, 3.0 * se(t_ls));

    // A constant baseline leaves the expectation unchanged.
    const ParamVector gb = policy_gradient(spec, params, states, actions, (rewards.array() + 5.0).matrix());
    EXPECT_NEAR(gb(layout.b_out), -2.0 * (mu - 3.0), 3.0 * se(((rewards.array() + 5.0) * z.array() / sigma).matrix()));
    EXPECT_THROW(policy_gradient(spec, params, states, actions.head(5), rewards), ParameterError);
}

TEST(Train, BaselineCentersAdvantages) {
    BanditEnv env(3.0);
    const auto rep = train(env, small_config(1500));
    double mean = 0.0, se = 0.0;
    const int last = 200;
    for (int k = 0; k < last; ++k) {
        const auto& r = rep.batches[rep.batches.size() - 1 - k];
        mean += r.advantage_mean / last;
        se += r.advantage_se / last;
    }
    EXPECT_LT(std::abs(mean), se);
}

TEST(Evaluate, StandardErrorScalesWithPaths) {
    QlbsEnv env(qlbs_config(0.0));
    const auto rep = train(env, small_config(5));
    const auto a = evaluate(env, rep.checkpoint, 4000, 3);
    const auto b = evaluate(env, rep.checkpoint, 16000, 3);
    EXPECT_NEAR(a.se / b.se, 2.0, 0.2);
    EXPECT_THROW(evaluate(env, rep.checkpoint, 1, 3), ParameterError);
    BanditEnv wrong;
    EXPECT_THROW(evaluate(wrong, rep.checkpoint, 10, 3), DataError);
}

TEST(Evaluate, CheckpointRoundTripReproducesPrice) {
    RlopConfig rc;
    rc.gbm = qlbs_config(0.0).gbm;
    RlopEnv env(rc);
    const auto rep = train(env, small_config(10));
    ASSERT_EQ(rep.checkpoint.extra.size(), 4);
    const std::string path = temp_path("rlop_ckpt.json");
    save_checkpoint(rep.checkpoint, path);
    const auto loaded = load_checkpoint(path);
    RlopEnv fresh(rlop_config_from_json(loaded.env));
    const auto a = evaluate(env, rep.checkpoint, 500, 4);
    const auto b = evaluate(fresh, loaded, 500, 4);
    EXPECT_EQ(a.price, b.price);
    EXPECT_EQ(a.se, b.se);
    EXPECT_EQ(fresh.extra_params(), rep.checkpoint.extra);
    std::remove(path.c_str());
}

TEST(Train, QlbsTelescopingHoldsOnEveryBatch) {
    QlbsEnv env(qlbs_config(0.3));
    const auto rep = train(env, small_config(30));
    for (const auto& r : rep.batches) EXPECT_LT(r.invariant_error, 1e-8);
    EXPECT_LT(rep.max_invariant_error, 1e-8);
}

TEST(Train, RlopInitialWealthMovesTowardCost) {
    RlopConfig rc;
    rc.gbm = qlbs_config(0.0).gbm;
    RlopEnv env(rc);
    auto cfg = small_config(300);
    cfg.lr_extra = 1e-3;
    const auto rep = train(env, cfg);
    // Starts at zero; the option is worth about 0.036.
    const double w0 = rep.checkpoint.extra(3);
    EXPECT_GT(w0, 0.01);
    EXPECT_LT(w0, 0.08);
}

TEST(Train, SkipsNumericFailuresWithinBudget) {
    FlakyBandit ok(20);
    const auto rep = train(ok, small_config(100));
    EXPECT_EQ(rep.skipped_batches, 5);
    int skipped = 0;
    for (const auto& r : rep.batches) skipped += r.skipped;
    EXPECT_EQ(skipped, 5);

    FlakyBandit bad(5);
    EXPECT_THROW(train(bad, small_config(100)), TrainingFailedError);
}

TEST(Train, EarlyStopAndLog) {
    BanditEnv env(0.0);  // the initial policy is already optimal
    auto cfg = small_config(2000);
    cfg.early_stop = true;
    cfg.convergence_window = 20;
    cfg.convergence_tol = 0.5;
    cfg.log_path = temp_path("train_log.jsonl");
    const auto rep = train(env, cfg);
    EXPECT_EQ(rep.stop_reason, "converged");
    EXPECT_LT(rep.batches.size(), 2000u);
    std::ifstream in(cfg.log_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("batch").get<int>(), static_cast<int>(lines));
        ++lines;
    }
    EXPECT_EQ(lines, rep.batches.size());
    std::remove(cfg.log_path.c_str());
}
