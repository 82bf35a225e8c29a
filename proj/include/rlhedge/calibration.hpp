#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rlhedge/pricers.hpp"

namespace rlhedge {

using Date = std::chrono::year_month_day;

struct OptionQuote {
    OptionContract contract;
    double mid_price = 0.0;
    ForwardQuote forward_quote;
    Date expiry{};
    int tau_days = 0;  // calendar days from the slice date to expiry
};

/// One trading day's cross-section of call quotes.
struct OptionSlice {
    Date date{};
    double underlying_close = 0.0;
    std::vector<OptionQuote> quotes;
};

struct CalibrationResult {
    ModelParams model;
    double objective = 0.0;          // sum of squared price errors
    double initial_objective = 0.0;  // at the first start point
    int n_quotes = 0;
    bool converged = false;
    int iterations = 0;
};

/// Box bounds on the model's natural parameters, in ModelParams field order.
struct ParamBox {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

const ParamBox& parameter_box(ModelKind kind);
Eigen::VectorXd to_vector(const ModelParams& params);
ModelParams from_vector(ModelKind kind, const Eigen::VectorXd& x);

/// Minimum slice size per model: 1 (BS), 4 (JD), 5 (Heston).
int min_quotes(ModelKind kind);

struct CalibrationOptions {
    int restarts = 8;
    int max_evals_per_restart = 3000;
    double simplex_step = 0.1;  // initial simplex edge in unit-box coordinates
    double f_tol = 1e-20;
    bool polish = true;         // Levenberg-Marquardt on the best restart
    int polish_iterations = 100;
};

/// Least-squares fit of one model to one slice. Each restart runs a bounded
/// Nelder-Mead in unit-box coordinates from a Halton start point; the best
/// restart is then polished by a projected Levenberg-Marquardt with
/// forward-difference Jacobian. Deterministic for a given slice.
CalibrationResult calibrate(const OptionSlice& slice, ModelKind kind, const CalibrationOptions& opt = {});

/// Model prices for every quote of a slice, in quote order.
std::vector<double> slice_model_prices(const OptionSlice& slice, const ModelParams& params);

// ---------------------------------------------------------------------------
// Bounded Nelder-Mead (exposed for testing)

struct NelderMeadResult {
    Eigen::VectorXd x;
    double fx = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> best_history;  // best value after each iteration
};

/// Minimizes f over the box [lower, upper]; trial points are projected onto
/// the box. Non-finite values count as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double step, int max_evals,
                             double f_tol);

/// k-th point (k >= 1) of the Halton sequence in `dim` dimensions (bases 2, 3, 5, ...).
Eigen::VectorXd halton_point(int k, int dim);

// ---------------------------------------------------------------------------
// Maturity buckets

struct MaturityBucket {
    int center_days;
    int lo_days;  // inclusive
    int hi_days;  // inclusive
};

/// Default: [3, 20] -> 14, [21, 41] -> 28, [42, 70] -> 56.
std::vector<MaturityBucket> default_buckets();

/// Bucket center for tau_days, or nullopt if no bucket covers it (the contract
/// is then filtered upstream).
std::optional<int> bucket_assign(int tau_days, const std::vector<MaturityBucket>& buckets = default_buckets());

/// Quotes of `slice` whose tau_days fall in the bucket with the given center.
OptionSlice bucket_slice(const OptionSlice& slice, int bucket_center,
                         const std::vector<MaturityBucket>& buckets = default_buckets());

}  // namespace rlhedge
