#include "rlhedge/qlbs_env.hpp"

#include <cmath>

#include "gbm_json.hpp"
#include "rlhedge/errors.hpp"

namespace rlhedge {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double tc_cost(double delta_u, double s, double epsilon_tc) {
    if (!(s > 0.0)) throw ParameterError("tc_cost: price must be > 0");
    if (!(epsilon_tc >= 0.0)) throw ParameterError("tc_cost: cost rate must be >= 0");
    return epsilon_tc * std::abs(delta_u) * s;
}

void QlbsConfig::validate() const {
    gbm.validate();
    contract.validate();
    if (!(lambda_risk >= 0.0)) throw ParameterError("qlbs: lambda_risk must be >= 0");
    if (!(epsilon_tc >= 0.0)) throw ParameterError("qlbs: epsilon_tc must be >= 0");
    if (contract.expiry_steps != gbm.horizon_steps)
        throw ParameterError("qlbs: contract expiry_steps must equal gbm horizon_steps");
    if (batch_paths < 2) throw ParameterError("qlbs: batch_paths must be >= 2");
}

double QlbsConfig::gamma() const { return std::exp(-gbm.r * gbm.dt); }

OptionContract horizon_contract(const GbmParams& gbm, double strike) {
    OptionContract c;
    c.strike = strike;
    c.expiry_steps = gbm.horizon_steps;
    c.tau_years = gbm.horizon_years();
    return c;
}

PortfolioPanel backward_portfolio(const QlbsConfig& cfg, const MatrixXd& paths, const MatrixXd& hedges) {
    const int T = cfg.gbm.horizon_steps;
    const Index n = paths.rows();
    if (paths.cols() != T + 1) throw ParameterError("backward_portfolio: paths must have T + 1 columns");
    if (hedges.rows() != n || hedges.cols() != T) throw ParameterError("backward_portfolio: hedges must be N x T");
    if (!hedges.allFinite()) throw NumericError("backward_portfolio: non-finite hedge");

    const double gamma = cfg.gamma();
    const double growth = std::exp(cfg.gbm.r * cfg.gbm.dt);
    PortfolioPanel panel;
    panel.hedges = hedges;
    panel.pi.resize(n, T + 1);
    panel.cash.resize(n, T + 1);
    for (Index p = 0; p < n; ++p) {
        panel.pi(p, T) = cfg.contract.payoff(paths(p, T));
        for (int t = T - 1; t >= 0; --t) {
            const double u = hedges(p, t);
            const double u_next = t + 1 < T ? hedges(p, t + 1) : 0.0;
            const double ds = paths(p, t + 1) - growth * paths(p, t);
            const double tc = tc_cost(u_next - u, paths(p, t + 1), cfg.epsilon_tc);
            panel.pi(p, t) = gamma * (panel.pi(p, t + 1) - u * ds + tc);
        }
    }
    if (!panel.pi.allFinite()) throw NumericError("backward_portfolio: non-finite portfolio value");
    panel.cash.leftCols(T) = panel.pi.leftCols(T) - hedges.cwiseProduct(paths.leftCols(T));
    panel.cash.col(T) = panel.pi.col(T);
    return panel;
}

ValueEstimate value_and_rewards(const QlbsConfig& cfg, const PortfolioPanel& panel) {
    const Index n = panel.pi.rows();
    const int T = static_cast<int>(panel.pi.cols()) - 1;
    if (n < 2) throw InsufficientDataError("value_and_rewards: need at least two paths for a variance");
    const double gamma = cfg.gamma();
    const double nd = static_cast<double>(n);

    ValueEstimate out;
    out.batch_sd.resize(T + 1);
    MatrixXd pen(n, T + 1);
    for (int tau = 0; tau <= T; ++tau) {
        const auto col = panel.pi.col(tau);
        const double mean = col.mean();
        const VectorXd sq = (col.array() - mean).square().matrix() * (nd / (nd - 1.0));
        const double var = sq.mean();  // divisor N - 1
        const double sd = std::sqrt(var);
        out.batch_sd(tau) = sd;
        if (sd > 0.0)
            pen.col(tau) = (sd + (sq.array() - var) / (2.0 * sd)).matrix();
        else
            pen.col(tau).setZero();
    }
    // Discounted suffix sums of the penalty.
    MatrixXd tail(n, T + 1);
    tail.col(T) = pen.col(T);
    for (int t = T - 1; t >= 0; --t) tail.col(t) = pen.col(t) + gamma * tail.col(t + 1);

    out.v.resize(n, T + 1);
    for (int t = 0; t <= T; ++t) {
        const double d = 1.0 - static_cast<double>(t) / T;
        out.v.col(t) = -d * panel.pi.col(t) - cfg.lambda_risk * tail.col(t);
    }
    out.rewards = out.v.leftCols(T) - out.v.rightCols(T);
    return out;
}

PriceEstimate qlbs_price_from_values(const ValueEstimate& values) {
    const auto v0 = values.v.col(0);
    const double n = static_cast<double>(v0.size());
    const double mean = v0.mean();
    const double var = n > 1 ? (v0.array() - mean).square().sum() / (n - 1.0) : 0.0;
    return {-mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------

QlbsEnv::QlbsEnv(QlbsConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

EpisodeBatch QlbsEnv::sample(std::uint64_t seed, int n_paths) const {
    const int T = cfg_.gbm.horizon_steps;
    EpisodeBatch b;
    b.n_paths = n_paths;
    b.paths = simulate_paths(cfg_.gbm, seed, n_paths);
    b.states.resize(2, static_cast<Index>(n_paths) * T);
    for (int p = 0; p < n_paths; ++p)
        for (int t = 0; t < T; ++t) {
            const Index m = static_cast<Index>(p) * T + t;
            b.states(0, m) = static_cast<double>(t) / T;
            b.states(1, m) = normalized_log_price(cfg_.gbm, t, b.paths(p, t));
        }
    return b;
}

MatrixXd QlbsEnv::hedge_matrix(const EpisodeBatch& batch, const VectorXd& actions) const {
    const int T = cfg_.gbm.horizon_steps;
    if (actions.size() != static_cast<Index>(batch.n_paths) * T)
        throw ParameterError("qlbs: one action per (path, step) expected");
    // actions are path-major with t fastest: that is a row-major N x T matrix.
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        actions.data(), batch.n_paths, T);
}

RolloutResult QlbsEnv::rollout(const EpisodeBatch& batch, const VectorXd& actions) const {
    const int T = cfg_.gbm.horizon_steps;
    const auto panel = backward_portfolio(cfg_, batch.paths, hedge_matrix(batch, actions));
    const auto values = value_and_rewards(cfg_, panel);

    RolloutResult out;
    out.returns.resize(actions.size());
    double worst = 0.0;
    for (int p = 0; p < batch.n_paths; ++p) {
        double g = 0.0;
        for (int t = T - 1; t >= 0; --t) {
            g += values.rewards(p, t);
            out.returns(static_cast<Index>(p) * T + t) = g;
            const double scale = std::max(1.0, std::abs(values.v(p, t)));
            worst = std::max(worst, std::abs(g + values.v(p, T) - values.v(p, t)) / scale);
        }
    }
    if (!out.returns.allFinite()) throw NumericError("qlbs: non-finite return");
    out.invariant_error = worst;
    out.mean_return = values.v.col(0).mean();
    out.price = qlbs_price_from_values(values);
    return out;
}

PriceEstimate QlbsEnv::price(const EpisodeBatch& batch, const VectorXd& actions) const {
    const auto panel = backward_portfolio(cfg_, batch.paths, hedge_matrix(batch, actions));
    return qlbs_price_from_values(value_and_rewards(cfg_, panel));
}

VectorXd QlbsEnv::input_shift() const { return (VectorXd(2) << 0.0, std::log(cfg_.contract.strike)).finished(); }

VectorXd QlbsEnv::input_scale() const {
    const double w = cfg_.gbm.sigma * std::sqrt(cfg_.gbm.horizon_years());
    return (VectorXd(2) << 1.0, w > 0.0 ? 1.0 / w : 1.0).finished();
}

nlohmann::json QlbsEnv::config_json() const {
    return {{"method", "qlbs"},
            {"gbm", detail::gbm_json(cfg_.gbm)},
            {"strike", cfg_.contract.strike},
            {"lambda_risk", cfg_.lambda_risk},
            {"epsilon_tc", cfg_.epsilon_tc},
            {"batch_paths", cfg_.batch_paths}};
}

QlbsConfig qlbs_config_from_json(const nlohmann::json& j) {
    try {
        QlbsConfig c;
        c.gbm = detail::gbm_from_json(j.at("gbm"));
        c.contract = horizon_contract(c.gbm, j.at("strike").get<double>());
        c.lambda_risk = j.at("lambda_risk").get<double>();
        c.epsilon_tc = j.at("epsilon_tc").get<double>();
        c.batch_paths = j.at("batch_paths").get<int>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("qlbs config: ") + e.what());
    }
}

PriceEstimate qlbs_price(const QlbsConfig& cfg, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed) {
    QlbsEnv env(cfg);
    return evaluate(env, ckpt, eval_paths, seed);
}

double qlbs_delta(const PolicyCheckpoint& ckpt, const NormalizedState& state, int horizon_steps) {
    if (horizon_steps < 1) throw ParameterError("qlbs_delta: horizon_steps must be >= 1");
    return policy_mean(ckpt, (VectorXd(2) << static_cast<double>(state.t) / horizon_steps, state.x).finished());
}

}  // namespace rlhedge
