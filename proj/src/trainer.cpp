#include "rlhedge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rlhedge/errors.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
    if (episodes_per_batch < 2) throw ParameterError("train: episodes_per_batch must be >= 2");
    if (n_batches < 1) throw ParameterError("train: n_batches must be >= 1");
    if (!(lr_policy > 0.0) || !(lr_value > 0.0) || !(lr_extra > 0.0))
        throw ParameterError("train: learning rates must be > 0");
    if (eval_paths < 2) throw ParameterError("train: eval_paths must be >= 2");
    if (convergence_window < 1) throw ParameterError("train: convergence_window must be >= 1");
    if (!(convergence_tol >= 0.0)) throw ParameterError("train: convergence_tol must be >= 0");
    if (!(grad_clip > 0.0)) throw ParameterError("train: grad_clip must be > 0");
    if (hidden_width < 1 || n_residual_blocks < 0) throw ParameterError("train: bad network shape");
    if (!std::isfinite(init_log_std)) throw ParameterError("train: init_log_std must be finite");
}

namespace {

void clip_global_norm(VectorXd& g, double max_norm) {
    const double n = g.norm();
    if (n > max_norm) g *= max_norm / n;
}

double mean_and_se(const VectorXd& x, double* se) {
    const double n = static_cast<double>(x.size());
    const double m = x.mean();
    *se = n > 1 ? std::sqrt((x.array() - m).square().sum() / (n - 1.0) / n) : 0.0;
    return m;
}

nlohmann::json record_json(const BatchRecord& r) {
    return {{"batch", r.batch},
            {"skipped", r.skipped},
            {"mean_return", r.mean_return},
            {"baseline_loss", r.baseline_loss},
            {"price", r.price},
            {"price_se", r.price_se},
            {"policy_grad_norm", r.policy_grad_norm},
            {"advantage_mean", r.advantage_mean},
            {"advantage_se", r.advantage_se},
            {"invariant_error", r.invariant_error}};
}

MatrixXd policy_means(const PolicyCheckpoint& ckpt, const MatrixXd& states) {
    return gaussian_head(forward(ckpt.policy_spec, ckpt.policy, states)).mean;
}

}  // namespace

ParamVector policy_gradient(const NetSpec& spec, const ParamVector& params, const MatrixXd& states,
                            const VectorXd& actions, const VectorXd& advantages) {
    const Index m = states.cols();
    if (actions.size() != m || advantages.size() != m)
        throw ParameterError("policy_gradient: one action and advantage per state expected");
    Tape tape;
    const MatrixXd raw = forward(spec, params, states, &tape);
    const auto head = gaussian_head(raw);
    VectorXd d_mean(m), d_log_std(m);
    for (Index k = 0; k < m; ++k) {
        const auto g = gaussian_logpdf_grad(head.mean(k), head.std(k), actions(k));
        d_mean(k) = advantages(k) * g.d_mu / static_cast<double>(m);
        d_log_std(k) = advantages(k) * g.d_log_sigma / static_cast<double>(m);
    }
    return backward(spec, params, tape, gaussian_head_backward(raw, d_mean, d_log_std));
}

double policy_mean(const PolicyCheckpoint& ckpt, const VectorXd& state) {
    if (state.size() != ckpt.policy_spec.input_dim) throw ParameterError("policy_mean: state dimension mismatch");
    return policy_means(ckpt, state)(0);
}

PriceEstimate evaluate(Environment& env, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed) {
    if (eval_paths < 2) throw ParameterError("evaluate: eval_paths must be >= 2");
    if (ckpt.policy_spec.input_dim != env.state_dim()) throw DataError("evaluate: checkpoint does not fit environment");
    if (ckpt.extra.size() > 0) env.set_extra_params(ckpt.extra);
    const auto batch = env.sample(derive_seed(seed, "eval"), eval_paths);
    return env.price(batch, policy_means(ckpt, batch.states));
}

TrainReport train(Environment& env, const TrainConfig& cfg) {
    cfg.validate();

    PolicyCheckpoint ckpt;
    ckpt.method = env.method();
    ckpt.policy_spec.input_dim = env.state_dim();
    ckpt.policy_spec.hidden_width = cfg.hidden_width;
    ckpt.policy_spec.n_residual_blocks = cfg.n_residual_blocks;
    ckpt.policy_spec.head = HeadKind::GaussianPolicy;
    ckpt.policy_spec.input_shift = env.input_shift();
    ckpt.policy_spec.input_scale = env.input_scale();
    ckpt.value_spec = ckpt.policy_spec;
    ckpt.value_spec.head = HeadKind::ScalarValue;
    ckpt.policy = init_params(ckpt.policy_spec, derive_seed(cfg.seed, "init/policy"), cfg.init_log_std);
    ckpt.value = init_params(ckpt.value_spec, derive_seed(cfg.seed, "init/value"));
    ckpt.env = env.config_json();

    VectorXd extra = env.extra_params();
    AdamState adam_policy(ckpt.policy.size(), cfg.lr_policy);
    AdamState adam_value(ckpt.value.size(), cfg.lr_value);
    AdamState adam_extra(extra.size(), cfg.lr_extra);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw DataError("train: cannot open log file " + cfg.log_path);
    }

    TrainReport report;
    report.stop_reason = "completed";
    std::vector<double> history;  // mean returns of accepted batches
    const int max_skipped = cfg.n_batches / 10;

    for (int b = 0; b < cfg.n_batches; ++b) {
        BatchRecord rec;
        rec.batch = b;
        try {
            const auto batch = env.sample(derive_seed(cfg.seed, "paths/" + std::to_string(b)), cfg.episodes_per_batch);
            const Index m = batch.states.cols();

            Tape ptape;
            const MatrixXd raw = forward(ckpt.policy_spec, ckpt.policy, batch.states, &ptape);
            const auto head = gaussian_head(raw);
            NormalRng noise(derive_seed(cfg.seed, "noise/" + std::to_string(b)));
            VectorXd actions(m);
            for (Index k = 0; k < m; ++k) actions(k) = head.mean(k) + head.std(k) * noise.normal();

            const auto out = env.rollout(batch, actions);

            Tape vtape;
            const VectorXd baseline = forward(ckpt.value_spec, ckpt.value, batch.states, &vtape).row(0).transpose();
            const VectorXd adv = out.returns - baseline;
            if (!adv.allFinite()) throw NumericError("train: non-finite advantage");

            // Descent on -mean(A log pi).
            VectorXd d_mean(m), d_log_std(m);
            for (Index k = 0; k < m; ++k) {
                const auto g = gaussian_logpdf_grad(head.mean(k), head.std(k), actions(k));
                d_mean(k) = -adv(k) * g.d_mu / static_cast<double>(m);
                d_log_std(k) = -adv(k) * g.d_log_sigma / static_cast<double>(m);
            }
            VectorXd g_policy = backward(ckpt.policy_spec, ckpt.policy, ptape, gaussian_head_backward(raw, d_mean, d_log_std));
            const MatrixXd d_value = (2.0 / static_cast<double>(m)) * (-adv).transpose();
            VectorXd g_value = backward(ckpt.value_spec, ckpt.value, vtape, d_value);
            if (!g_policy.allFinite() || !g_value.allFinite()) throw NumericError("train: non-finite gradient");

            rec.policy_grad_norm = g_policy.norm();
            clip_global_norm(g_policy, cfg.grad_clip);
            clip_global_norm(g_value, cfg.grad_clip);

            // Commit the step only once every piece is known to be finite.
            ParamVector next_policy = ckpt.policy, next_value = ckpt.value;
            AdamState next_ap = adam_policy, next_av = adam_value, next_ae = adam_extra;
            VectorXd next_extra = extra;
            adam_step(next_ap, next_policy, g_policy);
            adam_step(next_av, next_value, g_value);
            if (extra.size() > 0 && out.extra_grad.size() == extra.size()) {
                VectorXd g_extra = -out.extra_grad;
                clip_global_norm(g_extra, cfg.grad_clip);
                adam_step(next_ae, next_extra, g_extra);
            }
            ckpt.policy = std::move(next_policy);
            ckpt.value = std::move(next_value);
            adam_policy = std::move(next_ap);
            adam_value = std::move(next_av);
            adam_extra = std::move(next_ae);
            if (extra.size() > 0) {
                extra = std::move(next_extra);
                env.set_extra_params(extra);
            }

            rec.mean_return = out.mean_return;
            rec.baseline_loss = adv.squaredNorm() / static_cast<double>(m);
            rec.price = out.price.price;
            rec.price_se = out.price.se;
            rec.advantage_mean = mean_and_se(adv, &rec.advantage_se);
            rec.invariant_error = out.invariant_error;
            report.max_invariant_error = std::max(report.max_invariant_error, out.invariant_error);
            history.push_back(out.mean_return);
        } catch (const NumericError&) {
            rec.skipped = true;
            ++report.skipped_batches;
        }
        if (log.is_open()) log << record_json(rec).dump() << '\n';
        report.batches.push_back(rec);
        if (report.skipped_batches > max_skipped)
            throw TrainingFailedError("train: more than 10% of batches produced non-finite values");

        const auto w = static_cast<std::size_t>(cfg.convergence_window);
        if (cfg.early_stop && history.size() >= 2 * w && !report.batches.back().skipped) {
            double now = 0.0, before = 0.0;
            for (std::size_t k = 0; k < w; ++k) {
                now += history[history.size() - 1 - k];
                before += history[history.size() - 1 - w - k];
            }
            now /= static_cast<double>(w);
            before /= static_cast<double>(w);
            if (std::abs(now - before) <= cfg.convergence_tol * std::abs(before)) {
                report.stop_reason = "converged";
                break;
            }
        }
    }

    ckpt.extra = extra;
    report.checkpoint = ckpt;
    report.final_price = evaluate(env, ckpt, cfg.eval_paths, cfg.seed);
    return report;
}

// ---------------------------------------------------------------------------

EpisodeBatch BanditEnv::sample(std::uint64_t, int n_paths) const {
    if (n_paths < 1) throw ParameterError("bandit: n_paths must be >= 1");
    EpisodeBatch b;
    b.n_paths = n_paths;
    b.states = MatrixXd::Zero(1, n_paths);
    return b;
}

RolloutResult BanditEnv::rollout(const EpisodeBatch& batch, const VectorXd& actions) const {
    if (actions.size() != batch.n_paths) throw ParameterError("bandit: one action per episode expected");
    RolloutResult out;
    out.returns = -(actions.array() - target_).square().matrix();
    out.mean_return = out.returns.mean();
    out.price = price(batch, actions);
    return out;
}

PriceEstimate BanditEnv::price(const EpisodeBatch&, const VectorXd& actions) const {
    PriceEstimate p;
    p.price = mean_and_se(actions, &p.se);
    return p;
}

}  // namespace rlhedge
