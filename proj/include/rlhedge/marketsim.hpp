#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace rlhedge {

/// Geometric Brownian motion sampled on a uniform grid. Rates are per year,
/// sigma per sqrt-year, dt in years.
struct GbmParams {
    double mu = 0.0;
    double sigma = 0.2;
    double r = 0.0;
    double s0 = 1.0;
    int horizon_steps = 1;
    double dt = 1.0 / 252.0;

    /// Throws ParameterError if sigma < 0, s0 <= 0, dt <= 0 or horizon_steps < 1.
    void validate() const;

    double horizon_years() const { return horizon_steps * dt; }
    /// Per-step log drift (mu - sigma^2/2) dt.
    double log_drift() const { return (mu - 0.5 * sigma * sigma) * dt; }
};

struct PricePath {
    Eigen::VectorXd prices;  // horizon_steps + 1 entries, prices(0) == s0
    std::uint64_t seed = 0;
};

struct NormalizedState {
    int t = 0;
    double x = 0.0;
};

/// Exact log-normal stepping S_{t+1} = S_t exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z_t)
/// with Z drawn from NormalRng(seed).
PricePath simulate_path(const GbmParams& params, std::uint64_t seed);

/// Batch of paths as rows; row p is simulate_path(params, seed_base + p).
Eigen::MatrixXd simulate_paths(const GbmParams& params, std::uint64_t seed_base, Eigen::Index n_paths);

/// x = -(mu - sigma^2/2) t dt + ln S_t for a price observed at step t.
double normalized_log_price(const GbmParams& params, double t_steps, double price);

/// Throws IndexError unless 0 <= t <= horizon_steps.
NormalizedState normalize(const GbmParams& params, const PricePath& path, int t);

/// One-step log-normal density of S_{t+1} = s_to given S_t = s_from.
double transition_density(const GbmParams& params, double s_from, double s_to);

}  // namespace rlhedge
