#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>  // nlohmann::json, vendored

#include "rlhedge/neuralpolicy.hpp"

namespace rlhedge {

struct PriceEstimate {
    double price = 0.0;
    double se = 0.0;
};

/// Decisions of one batch. States are exogenous (prices do not react to the
/// hedge), so every decision of the batch is known before any action is taken
/// and the policy runs as a single batched forward pass.
struct EpisodeBatch {
    Eigen::MatrixXd states;  // state_dim x n_decisions
    Eigen::MatrixXd paths;   // n_paths x (T + 1); empty for environments without prices
    int n_paths = 0;
};

struct RolloutResult {
    Eigen::VectorXd returns;       // per decision
    double mean_return = 0.0;      // average episode objective
    PriceEstimate price;           // environment's price reading on this batch
    Eigen::VectorXd extra_grad;    // ascent gradient for extra_params(); empty if none
    double invariant_error = 0.0;  // environment self-check, e.g. telescoping residual
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string method() const = 0;
    virtual int state_dim() const = 0;
    virtual EpisodeBatch sample(std::uint64_t seed, int n_paths) const = 0;
    virtual RolloutResult rollout(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const = 0;
    /// Price read off deterministic (policy-mean) actions.
    virtual PriceEstimate price(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const = 0;

    /// Fixed input standardization for networks that read this environment's states.
    virtual Eigen::VectorXd input_shift() const { return Eigen::VectorXd::Zero(state_dim()); }
    virtual Eigen::VectorXd input_scale() const { return Eigen::VectorXd::Ones(state_dim()); }

    /// Trainable environment parameters outside the networks (RLOP initial wealth).
    virtual Eigen::VectorXd extra_params() const { return {}; }
    virtual void set_extra_params(const Eigen::VectorXd&) {}

    virtual nlohmann::json config_json() const = 0;
};

struct TrainConfig {
    int episodes_per_batch = 256;
    int n_batches = 5000;
    double lr_policy = 1e-4;
    double lr_value = 1e-3;
    double lr_extra = 1e-4;
    std::uint64_t seed = 0;
    int eval_paths = 10000;
    int convergence_window = 200;
    double convergence_tol = 1e-3;
    bool early_stop = true;
    double grad_clip = 10.0;  // global-norm clip per network
    int hidden_width = 32;
    int n_residual_blocks = 3;
    double init_log_std = -2.3;  // about ln 0.1
    std::string log_path;        // JSON-lines training log; empty disables it

    void validate() const;
};

struct BatchRecord {
    int batch = 0;
    bool skipped = false;
    double mean_return = 0.0;
    double baseline_loss = 0.0;
    double price = 0.0;
    double price_se = 0.0;
    double policy_grad_norm = 0.0;
    double advantage_mean = 0.0;
    double advantage_se = 0.0;
    double invariant_error = 0.0;
};

struct TrainReport {
    std::vector<BatchRecord> batches;
    std::string stop_reason;  // "completed", "converged"
    int skipped_batches = 0;
    double max_invariant_error = 0.0;
    PriceEstimate final_price;  // evaluate() on fresh paths
    PolicyCheckpoint checkpoint;
};

/// REINFORCE with a learned baseline. Each batch: sample paths, draw Gaussian
/// actions, take per-decision returns G from the environment, advantage
/// A = G - value(state), policy step on -mean(A log pi), value step on
/// mean((value - G)^2), both through Adam after global-norm clipping.
/// Deterministic for a fixed seed. Batches hitting a NumericError are skipped;
/// more than 10% skipped raises TrainingFailedError.
TrainReport train(Environment& env, const TrainConfig& cfg);

/// Price on eval_paths fresh paths under the checkpoint's mean policy. Seeds
/// are derived from `seed` under a label the trainer never uses for training.
PriceEstimate evaluate(Environment& env, const PolicyCheckpoint& ckpt, int eval_paths, std::uint64_t seed);

/// Score-function gradient of mean_m A_m log pi(a_m | s_m) w.r.t. policy params.
ParamVector policy_gradient(const NetSpec& spec, const ParamVector& params, const Eigen::MatrixXd& states,
                            const Eigen::VectorXd& actions, const Eigen::VectorXd& advantages);

/// Policy mean for one state.
double policy_mean(const PolicyCheckpoint& ckpt, const Eigen::VectorXd& state);

/// One-step bandit with reward -(a - target)^2 and a constant state; a test
/// double for the market environments.
class BanditEnv : public Environment {
public:
    explicit BanditEnv(double target = 3.0) : target_(target) {}
    std::string method() const override { return "bandit"; }
    int state_dim() const override { return 1; }
    EpisodeBatch sample(std::uint64_t seed, int n_paths) const override;
    RolloutResult rollout(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    PriceEstimate price(const EpisodeBatch& batch, const Eigen::VectorXd& actions) const override;
    nlohmann::json config_json() const override { return {{"target", target_}}; }

private:
    double target_;
};

}  // namespace rlhedge
