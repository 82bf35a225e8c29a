#include "rlhedge/rlop_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gbm_json.hpp"
#include "rlhedge/errors.hpp"
#include "rlhedge/qlbs_env.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void RlopConfig::validate() const {
    gbm.validate();
    if (!(strike > 0.0)) throw ParameterError("rlop: strike must be > 0");
    if (!(epsilon_tc >= 0.0)) throw ParameterError("rlop: epsilon_tc must be >= 0");
    if (!std::isfinite(fixed_w0)) throw ParameterError("rlop: fixed_w0 must be finite");
}

double penalty(PenaltyKind kind, double payoff, double wealth) {
    const double e = payoff - wealth;
    return kind == PenaltyKind::AbsError ? -std::abs(e) : -e * e;
}

namespace {

// dH/d(wealth)
double penalty_slope(PenaltyKind kind, double payoff, double wealth) {
    const double e = payoff - wealth;
    if (kind == PenaltyKind::SquaredError) return 2.0 * e;
    return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
}

}  // namespace

double forward_step(double pi_t, double u_t, double u_next, double s_t, double s_next, double r, double dt,
                    double epsilon_tc) {
    if (!(s_t > 0.0) || !(s_next > 0.0)) throw ParameterError("forward_step: prices must be > 0");
    return u_t * s_next + std::exp(r * dt) * (pi_t - u_t * s_t) - tc_cost(u_next - u_t, s_next, epsilon_tc);
}

StackedPortfolio rollout_stacked(const RlopConfig& cfg, const VectorXd& path, const StackedHedgeFn& hedge,
                                 const VectorXd& w0) {
    const int T = cfg.gbm.horizon_steps;
    if (path.size() != T + 1) throw ParameterError("rollout_stacked: path must have T + 1 prices");
    if (w0.size() != T) throw ParameterError("rollout_stacked: one initial wealth per maturity expected");
    StackedPortfolio out;
    out.rewards.resize(T);
    for (int i = 1; i <= T; ++i) {
        VectorXd u(i);
        for (int t = 0; t < i; ++t)
            u(t) = hedge(t, i, normalized_log_price(cfg.gbm, t, path(t)));
        VectorXd pi(i + 1);
        pi(0) = w0(i - 1);
        for (int t = 0; t < i; ++t) {
            const double u_next = t + 1 < i ? u(t + 1) : u(t);  // held through maturity
            pi(t + 1) = forward_step(pi(t), u(t), u_next, path(t), path(t + 1), cfg.gbm.r, cfg.gbm.dt, cfg.epsilon_tc);
        }
        if (!pi.allFinite() || !u.allFinite()) throw NumericError("rollout_stacked: non-finite portfolio value");
        out.rewards(i - 1) = penalty(cfg.penalty, std::max(path(i) - cfg.strike, 0.0), pi(i));
        out.pi.push_back(std::move(pi));
        out.hedges.push_back(std::move(u));
    }
    return out;
}

// ---------------------------------------------------------------------------

RlopEnv::RlopEnv(RlopConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const double start = cfg_.premium_mode == PremiumMode::FixedInitialWealth ? cfg_.fixed_w0 : 0.0;
    w0_ = VectorXd::Constant(cfg_.gbm.horizon_steps, start);
}

int RlopEnv::decisions_per_path() const {
    const int T = cfg_.gbm.horizon_steps;
    return T * (T + 1) / 2;
}

void RlopEnv::set_extra_params(const VectorXd& w0) {
    if (w0.size() != cfg_.gbm.horizon_steps) throw ParameterError("rlop: one initial wealth per maturity expected");
    if (cfg_.premium_mode == PremiumMode::LearnedInitialWealth) w0_ = w0;
}

namespace {

// Offset of maturity i's first decision within a path's block.
Index maturity_offset(int i) { return static_cast<Index>(i - 1) * i / 2; }

}  // namespace

EpisodeBatch RlopEnv::sample(std::uint64_t seed, int n_paths) const {
    const int T = cfg_.gbm.horizon_steps;
    const Index per_path = decisions_per_path();
    EpisodeBatch b;
    b.n_paths = n_paths;
    b.paths = simulate_paths(cfg_.gbm, seed, n_paths);
    b.states.resize(3, n_paths * per_path);
    for (int p = 0; p < n_paths; ++p)
        for (int i = 1; i <= T; ++i)
            for (int t = 0; t < i; ++t) {
                const Index m = p * per_path + maturity_offset(i) + t;
                b.states(0, m) = static_cast<double>(t) / T;
                b.states(1, m) = normalized_log_price(cfg_.gbm, t, b.paths(p, t));
                b.states(2, m) = static_cast<double>(i) / T;
            }
    return b;
}

RolloutResult RlopEnv::rollout(const EpisodeBatch& batch, const VectorXd& actions) const {
    const int T = cfg_.gbm.horizon_steps;
    const Index per_path = decisions_per_path();
    if (actions.size() != batch.n_paths * per_path) throw ParameterError("rlop: one action per decision expected");
    RolloutResult out;
    out.returns.resize(actions.size());
    out.extra_grad = VectorXd::Zero(T);
    double total = 0.0;
    for (int p = 0; p < batch.n_paths; ++p) {
        const VectorXd path = batch.paths.row(p).transpose();
        const Index base = p * per_path;
        const auto hedge = [&](int t, int i, double) { return actions(base + maturity_offset(i) + t); };
        const auto port = rollout_stacked(cfg_, path, hedge, w0_);
        for (int i = 1; i <= T; ++i) {
            const double reward = port.rewards(i - 1);
            out.returns.segment(base + maturity_offset(i), i).setConstant(reward);
            total += reward;
            const double payoff = std::max(path(i) - cfg_.strike, 0.0);
            out.extra_grad(i - 1) += penalty_slope(cfg_.penalty, payoff, port.pi[i - 1](i)) * std::exp(cfg_.gbm.r * i * cfg_.gbm.dt);
        }
    }
    const double count = static_cast<double>(batch.n_paths) * T;
    out.mean_return = total / count;
    if (cfg_.premium_mode == PremiumMode::LearnedInitialWealth)
        out.extra_grad /= count;
    else
        out.extra_grad.setZero();
    out.price = price(batch, actions);
    return out;
}

VectorXd RlopEnv::replication_costs(const EpisodeBatch& batch, const VectorXd& actions) const {
    const int T = cfg_.gbm.horizon_steps;
    const Index per_path = decisions_per_path();
    if (actions.size() != batch.n_paths * per_path) throw ParameterError("rlop: one action per decision expected");
    const double growth = std::exp(cfg_.gbm.r * cfg_.gbm.dt);
    const double discount = std::exp(-cfg_.gbm.r * cfg_.gbm.horizon_years());
    VectorXd costs(batch.n_paths);
    for (int p = 0; p < batch.n_paths; ++p) {
        const Index base = p * per_path + maturity_offset(T);
        double pi = 0.0;
        for (int t = 0; t < T; ++t) {
            const double u = actions(base + t);
            const double u_next = t + 1 < T ? actions(base + t + 1) : u;
            pi = u * batch.paths(p, t + 1) + growth * (pi - u * batch.paths(p, t)) -
                 tc_cost(u_next - u, batch.paths(p, t + 1), cfg_.epsilon_tc);
        }
        costs(p) = discount * (std::max(batch.paths(p, T) - cfg_.strike, 0.0) - pi);
    }
    if (!costs.allFinite()) throw NumericError("rlop: non-finite replication cost");
    return costs;
}

namespace {

double median_of(VectorXd v) {
    const Index n = v.size();
    std::sort(v.data(), v.data() + n);
    return n % 2 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

double sample_sd(const VectorXd& v) {
    const double n = static_cast<double>(v.size());
    if (n < 2) return 0.0;
    return std::sqrt((v.array() - v.mean()).square().sum() / (n - 1.0));
}

}  // namespace

PriceEstimate RlopEnv::price(const EpisodeBatch& batch, const VectorXd& actions) const {
    const VectorXd costs = replication_costs(batch, actions);
    const double se = sample_sd(costs) / std::sqrt(static_cast<double>(costs.size()));
    if (cfg_.penalty == PenaltyKind::SquaredError) return {costs.mean(), se};
    return {median_of(costs), std::sqrt(std::numbers::pi / 2.0) * se};
}

VectorXd RlopEnv::input_shift() const { return (VectorXd(3) << 0.0, std::log(cfg_.strike), 0.0).finished(); }

VectorXd RlopEnv::input_scale() const {
    const double w = cfg_.gbm.sigma * std::sqrt(cfg_.gbm.horizon_years());
    return (VectorXd(3) << 1.0, w > 0.0 ? 1.0 / w : 1.0, 1.0).finished();
}

nlohmann::json RlopEnv::config_json() const {
    return {{"method", "rlop"},
            {"gbm", detail::gbm_json(cfg_.gbm)},
            {"strike", cfg_.strike},
            {"epsilon_tc", cfg_.epsilon_tc},
            {"penalty", cfg_.penalty == PenaltyKind::AbsError ? "abs" : "squared"},
            {"premium_mode", cfg_.premium_mode == PremiumMode::LearnedInitialWealth ? "learned" : "fixed"},
            {"fixed_w0", cfg_.fixed_w0}};
}

RlopConfig rlop_config_from_json(const nlohmann::json& j) {
    try {
        RlopConfig c;
        c.gbm = detail::gbm_from_json(j.at("gbm"));
        c.strike = j.at("strike").get<double>();
        c.epsilon_tc = j.at("epsilon_tc").get<double>();
        const auto pen = j.at("penalty").get<std::string>();
        if (pen != "abs" && pen != "squared") throw DataError("rlop config: penalty must be abs or squared");
        c.penalty = pen == "abs" ? PenaltyKind::AbsError : PenaltyKind::SquaredError;
        const auto mode = j.at("premium_mode").get<std::string>();
        if (mode != "learned" && mode != "fixed") throw DataError("rlop config: premium_mode must be learned or fixed");
        c.premium_mode = mode == "learned" ? PremiumMode::LearnedInitialWealth : PremiumMode::FixedInitialWealth;
        c.fixed_w0 = j.at("fixed_w0").get<double>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("rlop config: ") + e.what());
    }
}

RlopPrice rlop_price(const RlopConfig& cfg, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed) {
    RlopEnv env(cfg);
    RlopPrice out;
    out.estimate = evaluate(env, ckpt, eval_paths, seed);
    out.learned_w0 = env.extra_params()(cfg.gbm.horizon_steps - 1);
    return out;
}

double rlop_price_bisection(const RlopConfig& cfg, const PolicyCheckpoint& ckpt, double tolerance, int eval_paths,
                            std::uint64_t seed) {
    RlopEnv env(cfg);
    const auto batch = env.sample(derive_seed(seed, "eval"), eval_paths);
    VectorXd actions(batch.states.cols());
    const auto head = gaussian_head(forward(ckpt.policy_spec, ckpt.policy, batch.states));
    actions = head.mean;
    const VectorXd costs = env.replication_costs(batch, actions);
    const double growth = std::exp(cfg.gbm.r * cfg.gbm.horizon_years());
    // Mean terminal penalty (as a positive number) for initial wealth w.
    const auto mean_penalty = [&](double w) {
        const auto e = (growth * (costs.array() - w));
        return cfg.penalty == PenaltyKind::AbsError ? e.abs().mean() : e.square().mean();
    };
    const double best = env.price(batch, actions).price;
    if (mean_penalty(best) > tolerance)
        throw NoSolutionError("rlop_price_bisection: tolerance below the attainable penalty");
    double lo = best - 1.0;
    for (int k = 0; mean_penalty(lo) <= tolerance; ++k) {
        if (k > 60) throw NoSolutionError("rlop_price_bisection: no lower bracket");
        lo = best - 2.0 * (best - lo);
    }
    double hi = best;
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (mean_penalty(mid) <= tolerance ? hi : lo) = mid;
    }
    return hi;
}

double rlop_delta(const PolicyCheckpoint& ckpt, const NormalizedState& state, int maturity, int horizon_steps) {
    if (horizon_steps < 1 || maturity < 1 || maturity > horizon_steps)
        throw ParameterError("rlop_delta: maturity must lie in 1..horizon_steps");
    return policy_mean(ckpt, (VectorXd(3) << static_cast<double>(state.t) / horizon_steps, state.x,
                              static_cast<double>(maturity) / horizon_steps)
                                 .finished());
}

}  // namespace rlhedge
