#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace rlhedge {

/// European call. expiry_steps is the step count on the simulation grid, used
/// by the RL environments; the pricers only read tau_years.
struct OptionContract {
    double strike = 1.0;
    int expiry_steps = 1;
    double tau_years = 1.0;
    bool is_call = true;

    void validate() const;
    double payoff(double spot) const { return spot > strike ? spot - strike : 0.0; }
};

struct ForwardQuote {
    double forward = 1.0;
    double discount = 1.0;  // in (0, 1]

    void validate() const;
};

struct BsParams {
    double sigma = 0.2;
};

struct JdParams {
    double sigma = 0.2;
    double jump_intensity = 0.0;  // lambda_J per year
    double jump_mean_log = 0.0;   // mean of log jump size
    double jump_std_log = 0.0;    // std of log jump size
};

struct HestonParams {
    double v0 = 0.04;
    double kappa = 1.0;
    double theta = 0.04;
    double xi = 0.5;
    double rho = 0.0;
};

using ModelParams = std::variant<BsParams, JdParams, HestonParams>;

enum class ModelKind { BS, JD, Heston };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);
ModelKind kind_of(const ModelParams& params);

/// Throws ParameterError on a negative volatility-like field or rho outside [-1, 1].
void validate(const ModelParams& params);

// ---------------------------------------------------------------------------
// Scalar kernels

/// Standard normal CDF through erfc, accurate to a few ulp over the whole line.
template <typename Scalar>
Scalar norm_cdf(Scalar x) {
    using std::erfc;
    return Scalar(0.5) * erfc(-x / Scalar(std::numbers::sqrt2));
}

template <typename Scalar>
Scalar norm_pdf(Scalar x) {
    using std::exp;
    return exp(Scalar(-0.5) * x * x) / Scalar(std::sqrt(2.0 * std::numbers::pi));
}

/// Undiscounted Black call on total standard deviation sd = sigma sqrt(tau).
template <typename Scalar>
Scalar black_call_undiscounted(Scalar forward, Scalar strike, Scalar sd) {
    using std::log;
    if (!(sd > Scalar(0))) return forward > strike ? forward - strike : Scalar(0);
    if (!(strike > Scalar(0))) return forward;
    const Scalar d1 = (log(forward / strike) + Scalar(0.5) * sd * sd) / sd;
    const Scalar d2 = d1 - sd;
    return forward * norm_cdf(d1) - strike * norm_cdf(d2);
}

// ---------------------------------------------------------------------------
// Black-76

double black76_price(const ForwardQuote& q, const OptionContract& c, double sigma);

/// Spot delta DF N(d1) F / spot: the forward is taken to move proportionally
/// with spot, so d/dS = (F/S) d/dF.
double black76_delta(const ForwardQuote& q, const OptionContract& c, double sigma, double spot);

double black76_vega(const ForwardQuote& q, const OptionContract& c, double sigma);

// ---------------------------------------------------------------------------
// Merton jump-diffusion

struct MertonOptions {
    int max_terms = 500;
    int min_terms = 10;
    double weight_tol = 1e-14;
};

/// Poisson mixture over jump counts n of Black prices with forward
/// F exp(-lambda k tau + n (m + s^2/2)) and variance sigma^2 tau + n s^2.
double merton_price(const ForwardQuote& q, const OptionContract& c, const JdParams& p,
                    const MertonOptions& opt = {});
double merton_delta(const ForwardQuote& q, const OptionContract& c, const JdParams& p, double spot,
                    const MertonOptions& opt = {});

// ---------------------------------------------------------------------------
// Heston

/// Lewis single-integral representation on [0, U], integrated by composite
/// Gauss-Legendre: panels [0, 1/2], [1/2, 2], [2, 8], ... growing 4x, each with
/// order / 8 nodes. U is upper_limit unless the expected integrated variance w
/// is so small that the integrand has not decayed there; then U = sqrt(80 / w),
/// capped at max_upper_limit. With check_convergence the integral is repeated
/// at twice the order and a disagreement above convergence_tol (absolute, in
/// price units scaled by max(1, F)) raises NumericError.
struct HestonOptions {
    int order = 128;
    double upper_limit = 200.0;
    double max_upper_limit = 1.0e4;
    bool check_convergence = true;
    double convergence_tol = 1e-8;
};

double heston_price(const ForwardQuote& q, const OptionContract& c, const HestonParams& p,
                    const HestonOptions& opt = {});

/// Prices several strikes sharing one expiry and forward; the characteristic
/// function is evaluated once per node.
std::vector<double> heston_prices(const ForwardQuote& q, double tau_years, std::span<const double> strikes,
                                  const HestonParams& p, const HestonOptions& opt = {});

/// Central difference in spot with bump 1e-4 * spot (forward scaled along).
double heston_delta(const ForwardQuote& q, const OptionContract& c, const HestonParams& p, double spot,
                    const HestonOptions& opt = {});

// ---------------------------------------------------------------------------
// Dispatch and inversion

double model_price(const ModelParams& m, const ForwardQuote& q, const OptionContract& c);
double model_delta(const ModelParams& m, const ForwardQuote& q, const OptionContract& c, double spot);

/// Black-76 implied volatility by bracketed TOMS 748 on total deviation.
/// Requires DF max(F-K, 0) <= price < DF F; otherwise NoSolutionError.
double implied_vol(const ForwardQuote& q, const OptionContract& c, double price);

/// Gauss-Legendre nodes and weights on [-1, 1]; cached per order.
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussLegendreRule& gauss_legendre(int order);

}  // namespace rlhedge
