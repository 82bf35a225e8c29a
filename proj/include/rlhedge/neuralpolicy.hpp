#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>  // nlohmann::json, vendored

namespace rlhedge {

enum class HeadKind { GaussianPolicy, ScalarValue };

/// Dense residual network:
///   h_0 = W_in s + b_in,   s = (input - input_shift) .* input_scale
///   h_k = h_{k-1} + W2_k tanh(W1_k h_{k-1} + b1_k) + b2_k,   k = 1..n_residual_blocks
///   out = W_out h_K + b_out
/// The input standardization is fixed (not trained) and travels with the spec.
struct NetSpec {
    int input_dim = 2;
    int hidden_width = 32;
    int n_residual_blocks = 3;
    HeadKind head = HeadKind::GaussianPolicy;
    Eigen::VectorXd input_shift;  // empty means zeros
    Eigen::VectorXd input_scale;  // empty means ones

    void validate() const;
    int output_dim() const { return head == HeadKind::GaussianPolicy ? 2 : 1; }
};

/// Flat parameters. Layout, each matrix column-major:
///   W_in [H x D], b_in [H],
///   per block: W1 [H x H], b1 [H], W2 [H x H], b2 [H],
///   W_out [O x H], b_out [O].
using ParamVector = Eigen::VectorXd;

Eigen::Index param_count(const NetSpec& spec);

/// Offsets of the blocks above; end == param_count.
struct ParamLayout {
    Eigen::Index w_in, b_in;
    std::vector<Eigen::Index> w1, b1, w2, b2;
    Eigen::Index w_out, b_out, end;
};
ParamLayout param_layout(const NetSpec& spec);

/// Weights uniform in +-1/sqrt(fan_in) from the given seed, biases zero. The
/// policy head's mean row is zeroed so the initial policy is the zero hedge;
/// its log-std bias is set to init_log_std.
ParamVector init_params(const NetSpec& spec, std::uint64_t seed, double init_log_std = 0.0);

/// Activations kept for the backward pass.
struct Tape {
    Eigen::MatrixXd input;                // standardized, D x N
    std::vector<Eigen::MatrixXd> hidden;  // h_0..h_K, H x N each
    std::vector<Eigen::MatrixXd> act;     // tanh outputs per block, H x N
};

/// Batched forward pass; inputs are columns (D x N). Returns raw head outputs
/// (O x N). Throws NumericError on non-finite activations.
Eigen::MatrixXd forward(const NetSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                        Tape* tape = nullptr);

/// Reverse pass: gradient of sum_n <d_out(:, n), out(:, n)> w.r.t. params.
/// When d_input is given it receives the gradient w.r.t. the raw inputs.
ParamVector backward(const NetSpec& spec, const ParamVector& params, const Tape& tape, const Eigen::MatrixXd& d_out,
                     Eigen::MatrixXd* d_input = nullptr);

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// Gaussian head view of raw outputs: row 0 is the mean, row 1 the log-std
/// before clamping to [kMinLogStd, kMaxLogStd].
struct GaussianHead {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;
    Eigen::VectorXd std;
};
GaussianHead gaussian_head(const Eigen::MatrixXd& raw);

/// Maps gradients w.r.t. (mean, clamped log-std) back to raw outputs; the
/// clamp passes no gradient outside its range.
Eigen::MatrixXd gaussian_head_backward(const Eigen::MatrixXd& raw, const Eigen::VectorXd& d_mean,
                                       const Eigen::VectorXd& d_log_std);

struct GaussianLogPdf {
    double logpdf;
    double d_mu;
    double d_log_sigma;
};

/// log N(action; mu, sigma) and its partials in mu and log sigma.
GaussianLogPdf gaussian_logpdf_grad(double mu, double sigma, double action);

// ---------------------------------------------------------------------------

struct AdamState {
    long long step = 0;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double learning_rate = 1e-4;

    AdamState() = default;
    explicit AdamState(Eigen::Index n, double lr = 1e-4)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), learning_rate(lr) {}
};

/// Bias-corrected Adam: params -= lr m_hat / (sqrt(v_hat) + eps). Gradient
/// descent direction; pass the negated gradient to ascend.
void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const NetSpec& spec);
NetSpec net_spec_from_json(const nlohmann::json& j);

/// Trained nets plus whatever the environment needs to use them again.
struct PolicyCheckpoint {
    static constexpr int kSchemaVersion = 1;
    std::string method;  // "qlbs", "rlop" or a test label
    NetSpec policy_spec;
    ParamVector policy;
    NetSpec value_spec;
    ParamVector value;
    Eigen::VectorXd extra;  // environment parameters, e.g. learned initial wealth
    nlohmann::json env;     // environment configuration
};

nlohmann::json to_json(const PolicyCheckpoint& ckpt);
PolicyCheckpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& path);
PolicyCheckpoint load_checkpoint(const std::string& path);

}  // namespace rlhedge
