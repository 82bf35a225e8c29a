#include "rlhedge/backtest.hpp"

#include <algorithm>
#include <cmath>

#include "rlhedge/errors.hpp"
#include "rlhedge/qlbs_env.hpp"
#include "rlhedge/rlop_env.hpp"
#include "rlhedge/trainer.hpp"

namespace rlhedge {

using Eigen::VectorXd;

DeltaRule model_delta_rule(const ModelParams& model, double rate, double carry) {
    validate(model);
    return [model, rate, carry](const HedgeContext& ctx) {
        const ForwardQuote q{ctx.spot * std::exp(carry * ctx.tau_years), std::exp(-rate * ctx.tau_years)};
        OptionContract c;
        c.strike = ctx.strike;
        c.tau_years = ctx.tau_years;
        c.expiry_steps = std::max(1, ctx.n_steps - ctx.step);
        return model_delta(model, q, c, ctx.spot);
    };
}

DeltaRule policy_delta_rule(const PolicyCheckpoint& ckpt) {
    GbmParams gbm;
    double train_strike = 1.0;
    bool stacked = false;
    if (ckpt.method == "qlbs") {
        const auto c = qlbs_config_from_json(ckpt.env);
        gbm = c.gbm;
        train_strike = c.contract.strike;
    } else if (ckpt.method == "rlop") {
        const auto c = rlop_config_from_json(ckpt.env);
        gbm = c.gbm;
        train_strike = c.strike;
        stacked = true;
    } else {
        throw ParameterError("policy_delta_rule: unknown method " + ckpt.method);
    }
    if (ckpt.policy_spec.input_dim != (stacked ? 3 : 2))
        throw DataError("policy_delta_rule: checkpoint input size does not match its method");
    return [ckpt, gbm, train_strike, stacked](const HedgeContext& ctx) {
        const double t_norm = static_cast<double>(ctx.step) / ctx.n_steps;
        const double elapsed = t_norm * gbm.horizon_years();
        // Same moneyness S / K as the contract, in training units.
        const double s_train = train_strike * ctx.spot / ctx.strike;
        const double x = -(gbm.mu - 0.5 * gbm.sigma * gbm.sigma) * elapsed + std::log(s_train);
        VectorXd state(stacked ? 3 : 2);
        state(0) = t_norm;
        state(1) = x;
        if (stacked) state(2) = 1.0;
        return policy_mean(ckpt, state);
    };
}

void HedgePlan::validate() const {
    if (!delta) throw ParameterError("hedge plan: missing delta rule");
    if (!(cost_rate >= 0.0)) throw ParameterError("hedge plan: cost rate must be >= 0");
    if (!(premium >= 0.0)) throw ParameterError("hedge plan: premium must be >= 0");
    if (!std::isfinite(rate)) throw ParameterError("hedge plan: rate must be finite");
}

HedgeOutcome run_hedge(const HedgePlan& plan, const RealizedPath& path, double strike) {
    plan.validate();
    if (!(strike > 0.0)) throw ParameterError("run_hedge: strike must be > 0");
    const auto n_obs = path.prices.size();
    if (n_obs < 2 || path.times.size() != n_obs) throw DataError("run_hedge: need at least two aligned observations");
    if (!(path.prices.array() > 0.0).all() || !path.prices.allFinite())
        throw DataError("run_hedge: prices must be positive and finite");
    for (Eigen::Index k = 1; k < n_obs; ++k)
        if (!(path.times(k) > path.times(k - 1))) throw DataError("run_hedge: observation times must increase");

    const int n_steps = static_cast<int>(n_obs) - 1;
    const double expiry = path.times(n_steps);
    double cash = plan.premium;
    double position = 0.0;
    double tc = 0.0;
    HedgeContext ctx;
    ctx.n_steps = n_steps;
    ctx.s0 = path.prices(0);
    ctx.strike = strike;
    for (int k = 0; k < n_steps; ++k) {
        ctx.step = k;
        ctx.spot = path.prices(k);
        ctx.elapsed_years = path.times(k) - path.times(0);
        ctx.tau_years = expiry - path.times(k);
        const double target = plan.delta(ctx);
        if (!std::isfinite(target)) throw NumericError("run_hedge: non-finite delta");
        const double trade = target - position;
        const double cost = plan.cost_rate * std::abs(trade) * ctx.spot;
        cash -= trade * ctx.spot + cost;
        tc += cost;
        position = target;
        cash *= std::exp(plan.rate * (path.times(k + 1) - path.times(k)));
    }
    const double s_T = path.prices(n_steps);
    HedgeOutcome out;
    out.pnl_net = cash + position * s_T - std::max(s_T - strike, 0.0);
    out.tc_total = tc;
    out.xi = out.pnl_net + out.tc_total;
    out.n_rebalances = n_steps;
    return out;
}

HedgeOutcome run_hedge(const HedgePlan& plan, const PricePath& path, const GbmParams& gbm, double strike) {
    RealizedPath rp;
    rp.prices = path.prices;
    rp.times = VectorXd::LinSpaced(path.prices.size(), 0.0, gbm.dt * static_cast<double>(path.prices.size() - 1));
    return run_hedge(plan, rp, strike);
}

std::optional<OptionQuote> select_contract(const OptionSlice& slice, double target_moneyness, int bucket_center,
                                           const std::vector<MaturityBucket>& buckets) {
    std::optional<OptionQuote> best;
    double best_gap = 0.0;
    for (const auto& q : slice.quotes) {
        if (bucket_assign(q.tau_days, buckets) != bucket_center) continue;
        const double gap = std::abs(q.contract.strike / q.forward_quote.forward - target_moneyness);
        if (!best || gap < best_gap || (gap == best_gap && q.contract.strike < best->contract.strike)) {
            best = q;
            best_gap = gap;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------

namespace {

int days_between(const Date& from, const Date& to) {
    return static_cast<int>((std::chrono::sys_days(to) - std::chrono::sys_days(from)).count());
}

}  // namespace

std::vector<OutcomeRow> backtest_slices(const std::vector<OptionSlice>& slices, const std::vector<std::string>& models,
                                        const std::map<std::string, PolicyCheckpoint>& policies,
                                        const BacktestConfig& cfg) {
    if (!(cfg.cost_rate >= 0.0)) throw ParameterError("backtest: cost rate must be >= 0");
    std::vector<const OptionSlice*> days;
    for (const auto& s : slices) days.push_back(&s);
    std::sort(days.begin(), days.end(), [](const auto* a, const auto* b) { return a->date < b->date; });
    for (std::size_t i = 1; i < days.size(); ++i)
        if (days[i]->date == days[i - 1]->date) throw DataError("backtest: duplicate slice date");

    std::map<std::string, DeltaRule> policy_rules;
    for (const auto& m : models) {
        if (m == "qlbs" || m == "rlop") {
            const auto it = policies.find(m);
            if (it == policies.end()) throw ParameterError("backtest: no trained policy for " + m);
            policy_rules[m] = policy_delta_rule(it->second);
        } else {
            model_kind_from_string(m);  // rejects unknown names
        }
    }

    std::vector<OutcomeRow> rows;
    for (std::size_t d = 0; d < days.size(); ++d) {
        const OptionSlice& day = *days[d];
        for (int bucket : cfg.buckets) {
            const OptionSlice cross_section = bucket_slice(day, bucket, cfg.bucket_defs);
            std::map<std::string, std::optional<ModelParams>> fitted;  // nullopt: calibration failed
            for (double target : cfg.targets) {
                const auto quote = select_contract(day, target, bucket, cfg.bucket_defs);

                // Realized path from the day's close to the last close on or before expiry.
                RealizedPath path;
                std::string path_status = "ok";
                if (!quote) {
                    path_status = "no_contract";
                } else if (days.back()->date < quote->expiry) {
                    path_status = "incomplete_path";
                } else {
                    std::vector<double> px, tm;
                    for (std::size_t j = d; j < days.size() && days[j]->date <= quote->expiry; ++j) {
                        px.push_back(days[j]->underlying_close);
                        tm.push_back(days_between(day.date, days[j]->date) / 365.0);
                    }
                    if (px.size() < 2) path_status = "incomplete_path";
                    path.prices = Eigen::Map<VectorXd>(px.data(), static_cast<Eigen::Index>(px.size()));
                    path.times = Eigen::Map<VectorXd>(tm.data(), static_cast<Eigen::Index>(tm.size()));
                }

                for (const auto& m : models) {
                    OutcomeRow row;
                    row.date = day.date;
                    row.asset = cfg.asset;
                    row.model = m;
                    row.bucket = bucket;
                    row.target_moneyness = target;
                    row.cost_rate = cfg.cost_rate;
                    row.status = path_status;
                    if (path_status != "ok") {
                        rows.push_back(row);
                        continue;
                    }
                    const double tau = quote->contract.tau_years;
                    const double rate = -std::log(quote->forward_quote.discount) / tau;
                    const double carry = std::log(quote->forward_quote.forward / day.underlying_close) / tau;
                    HedgePlan plan;
                    plan.cost_rate = cfg.cost_rate;
                    plan.premium = quote->mid_price;
                    plan.rate = rate;
                    if (const auto it = policy_rules.find(m); it != policy_rules.end()) {
                        plan.delta = it->second;
                    } else {
                        if (!fitted.contains(m)) {
                            if (cfg.fitted) {
                                fitted[m] = cfg.fitted(day.date, bucket, m);
                            } else {
                                try {
                                    fitted[m] =
                                        calibrate(cross_section, model_kind_from_string(m), cfg.calibration).model;
                                } catch (const Error&) {
                                    fitted[m] = std::nullopt;
                                }
                            }
                        }
                        if (!fitted[m]) {
                            row.status = "calibration_failed";
                            rows.push_back(row);
                            continue;
                        }
                        plan.delta = model_delta_rule(*fitted[m], rate, carry);
                    }
                    try {
                        const auto out = run_hedge(plan, path, quote->contract.strike);
                        row.pnl_net = out.pnl_net;
                        row.tc_total = out.tc_total;
                        row.xi = out.xi;
                        row.n_rebalances = out.n_rebalances;
                    } catch (const NumericError&) {
                        row.status = "delta_failed";
                    }
                    rows.push_back(row);
                }
            }
        }
    }
    return rows;
}

}  // namespace rlhedge
