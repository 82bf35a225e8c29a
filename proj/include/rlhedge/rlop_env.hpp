#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "rlhedge/marketsim.hpp"
#include "rlhedge/trainer.hpp"

namespace rlhedge {

enum class PenaltyKind { AbsError, SquaredError };
enum class PremiumMode { LearnedInitialWealth, FixedInitialWealth };

struct RlopConfig {
    GbmParams gbm;
    double strike = 1.0;
    double epsilon_tc = 0.0;
    PenaltyKind penalty = PenaltyKind::AbsError;
    PremiumMode premium_mode = PremiumMode::LearnedInitialWealth;
    double fixed_w0 = 0.0;  // used by FixedInitialWealth for every maturity

    void validate() const;
};

/// H(payoff, wealth): -|x - y| or -(x - y)^2.
double penalty(PenaltyKind kind, double payoff, double wealth);

/// Pi_{t+1} = u_t S_{t+1} + e^{r dt} (Pi_t - u_t S_t) - tc_cost(u_next - u_t, S_{t+1}).
double forward_step(double pi_t, double u_t, double u_next, double s_t, double s_next, double r, double dt,
                    double epsilon_tc);

/// pi[i - 1] holds Pi_0..Pi_i of the maturity-i portfolio, hedges[i - 1]
/// holds u_0..u_{i-1}; rewards(i - 1) = H((S_i - K)^+, Pi_i).
struct StackedPortfolio {
    std::vector<Eigen::VectorXd> pi;
    std::vector<Eigen::VectorXd> hedges;
    Eigen::VectorXd rewards;
};

/// hedge(t, i, x_t) for t < i; never queried at t >= i.
using StackedHedgeFn = std::function<double(int t, int i, double x)>;

/// Runs the ensemble i = 1..T over one path. Positions are held through
/// maturity without an unwind trade. w0(i - 1) is the initial wealth of
/// maturity i. Throws NumericError on non-finite values.
StackedPortfolio rollout_stacked(const RlopConfig& cfg, const Eigen::VectorXd& path, const StackedHedgeFn& hedge,
                                 const Eigen::VectorXd& w0);

class RlopEnv : public Environment {
public:
    explicit RlopEnv(RlopConfig cfg);

    std::string method() const override { return "rlop"; }
    int state_dim() const override { return 3; }  // (t / T, x, i / T)
    EpisodeBatch sample(std::uint64_t seed, int n_paths) const override;
    RolloutResult rollout(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    /// Initial wealth minimizing the mean maturity-T penalty on this batch:
    /// the median discounted replication cost for AbsError, the mean for
    /// SquaredError. The SE uses sqrt(pi / 2) sd / sqrt(N) for the median.
    PriceEstimate price(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    Eigen::VectorXd input_shift() const override;
    Eigen::VectorXd input_scale() const override;
    Eigen::VectorXd extra_params() const override { return w0_; }
    void set_extra_params(const Eigen::VectorXd& w0) override;
    nlohmann::json config_json() const override;

    const RlopConfig& config() const { return cfg_; }
    int decisions_per_path() const;

    /// Discounted maturity-T replication cost per path, exp(-r T dt) (h(S_T) - Pi_T),
    /// with Pi_T started from zero wealth.
    Eigen::VectorXd replication_costs(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const;

private:
    RlopConfig cfg_;
    Eigen::VectorXd w0_;
};

RlopConfig rlop_config_from_json(const nlohmann::json& j);

struct RlopPrice {
    PriceEstimate estimate;  // argmin of the evaluation penalty
    double learned_w0 = 0.0; // the trained maturity-T initial wealth
};

RlopPrice rlop_price(const RlopConfig& cfg, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed);

/// Smallest initial wealth whose mean maturity-T penalty under the fixed
/// trained policy is at most `tolerance`, by bisection. Throws NoSolutionError
/// when even the optimal wealth misses the tolerance.
double rlop_price_bisection(const RlopConfig& cfg, const PolicyCheckpoint& ckpt, double tolerance, int eval_paths,
                            std::uint64_t seed);

/// Policy mean at (t / T, x, i / T).
double rlop_delta(const PolicyCheckpoint& ckpt, const NormalizedState& state, int maturity, int horizon_steps);

}  // namespace rlhedge
