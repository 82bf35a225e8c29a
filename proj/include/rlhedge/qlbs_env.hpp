#pragma once

#include <Eigen/Dense>

#include "rlhedge/marketsim.hpp"
#include "rlhedge/pricers.hpp"
#include "rlhedge/trainer.hpp"

namespace rlhedge {

/// Proportional trading cost eps |delta_u| s.
double tc_cost(double delta_u, double s, double epsilon_tc);

struct QlbsConfig {
    GbmParams gbm;
    OptionContract contract;  // expiry_steps must equal gbm.horizon_steps
    double lambda_risk = 0.0;
    double epsilon_tc = 0.0;
    int batch_paths = 256;

    void validate() const;
    double gamma() const;  // one-step discount exp(-r dt)
};

/// Contract matching the config's horizon: strike K, expiry T steps, tau = T dt.
OptionContract horizon_contract(const GbmParams& gbm, double strike);

/// Rows are paths. pi and cash are N x (T + 1); hedges N x T holds u_0..u_{T-1}
/// and u_T = 0 (the final step unwinds into the payoff).
struct PortfolioPanel {
    Eigen::MatrixXd pi;
    Eigen::MatrixXd hedges;
    Eigen::MatrixXd cash;
};

/// Pi_T = (S_T - K)^+ and, backwards,
///   Pi_t = gamma (Pi_{t+1} - u_t dS_t + TC_{t+1}),  dS_t = S_{t+1} - e^{r dt} S_t,
///   TC_{t+1} = tc_cost(u_{t+1} - u_t, S_{t+1}).
/// Cash is B_t = Pi_t - u_t S_t. Throws NumericError on non-finite values.
PortfolioPanel backward_portfolio(const QlbsConfig& cfg, const Eigen::MatrixXd& paths, const Eigen::MatrixXd& hedges);

/// v[p, t] = -d(t) Pi[p, t] - lambda sum_{tau >= t} gamma^(tau - t) pen[p, tau],
/// with d(t) = 1 - t/T. pen is the per-path influence term of the batch
/// standard deviation of Pi_tau,
///   pen[p, tau] = sd + ((Pi[p, tau] - mean)^2 N/(N-1) - var) / (2 sd),
/// whose batch mean is exactly sd (zero when sd = 0). Rewards are
/// R[p, t] = v[p, t] - v[p, t+1], so sums of rewards telescope per path.
struct ValueEstimate {
    Eigen::MatrixXd v;            // N x (T + 1)
    Eigen::MatrixXd rewards;      // N x T
    Eigen::VectorXd batch_sd;     // sd of Pi_tau over the batch, T + 1 entries
};

/// Throws InsufficientDataError for fewer than two paths.
ValueEstimate value_and_rewards(const QlbsConfig& cfg, const PortfolioPanel& panel);

/// -mean(v[., 0]) with standard error sd(v[., 0]) / sqrt(N).
PriceEstimate qlbs_price_from_values(const ValueEstimate& values);

class QlbsEnv : public Environment {
public:
    explicit QlbsEnv(QlbsConfig cfg);

    std::string method() const override { return "qlbs"; }
    int state_dim() const override { return 2; }
    EpisodeBatch sample(std::uint64_t seed, int n_paths) const override;
    RolloutResult rollout(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    PriceEstimate price(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    Eigen::VectorXd input_shift() const override;
    Eigen::VectorXd input_scale() const override;
    nlohmann::json config_json() const override;

    const QlbsConfig& config() const { return cfg_; }
    /// Actions (path-major, t fastest) as an N x T hedge matrix.
    Eigen::MatrixXd hedge_matrix(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const;

private:
    QlbsConfig cfg_;
};

QlbsConfig qlbs_config_from_json(const nlohmann::json& j);

/// -V_0 under the checkpoint's mean policy on eval_paths fresh paths.
PriceEstimate qlbs_price(const QlbsConfig& cfg, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed);

/// Policy mean at (t / T, x), read as shares per option.
double qlbs_delta(const PolicyCheckpoint& ckpt, const NormalizedState& state, int horizon_steps);

}  // namespace rlhedge
