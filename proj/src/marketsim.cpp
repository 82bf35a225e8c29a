#include "rlhedge/marketsim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rlhedge/errors.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

void GbmParams::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw ParameterError("gbm: sigma must be finite and >= 0");
    if (!(s0 > 0.0) || !std::isfinite(s0))
        throw ParameterError("gbm: s0 must be finite and > 0");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ParameterError("gbm: dt must be finite and > 0");
    if (horizon_steps < 1)
        throw ParameterError("gbm: horizon_steps must be >= 1");
    if (!std::isfinite(mu) || !std::isfinite(r))
        throw ParameterError("gbm: mu and r must be finite");
}

namespace {

void fill_path(const GbmParams& p, std::uint64_t seed, double* out, Eigen::Index stride) {
    NormalRng rng(seed);
    const double drift = p.log_drift();
    const double vol = p.sigma * std::sqrt(p.dt);
    double s = p.s0;
    out[0] = s;
    for (int t = 0; t < p.horizon_steps; ++t) {
        s *= std::exp(drift + vol * rng.normal());
        out[(t + 1) * stride] = s;
    }
}

}  // namespace

PricePath simulate_path(const GbmParams& params, std::uint64_t seed) {
    params.validate();
    PricePath path;
    path.seed = seed;
    path.prices.resize(params.horizon_steps + 1);
    fill_path(params, seed, path.prices.data(), 1);
    return path;
}

Eigen::MatrixXd simulate_paths(const GbmParams& params, std::uint64_t seed_base, Eigen::Index n_paths) {
    params.validate();
    if (n_paths < 0) throw ParameterError("simulate_paths: negative path count");
    Eigen::MatrixXd out(n_paths, params.horizon_steps + 1);
    for (Eigen::Index p = 0; p < n_paths; ++p)
        fill_path(params, seed_base + static_cast<std::uint64_t>(p), &out(p, 0), out.outerStride());
    return out;
}

double normalized_log_price(const GbmParams& params, double t_steps, double price) {
    const double drift = params.mu - 0.5 * params.sigma * params.sigma;
    return -drift * (t_steps * params.dt) + std::log(price);
}

NormalizedState normalize(const GbmParams& params, const PricePath& path, int t) {
    if (t < 0 || t > params.horizon_steps || t >= path.prices.size())
        throw IndexError("normalize: step " + std::to_string(t) + " out of range");
    return {t, normalized_log_price(params, t, path.prices(t))};
}

double transition_density(const GbmParams& params, double s_from, double s_to) {
    if (!(s_from > 0.0) || !(s_to > 0.0))
        throw ParameterError("transition_density: prices must be > 0");
    const double sd = params.sigma * std::sqrt(params.dt);
    if (!(sd > 0.0)) throw ParameterError("transition_density: degenerate for sigma = 0");
    const double z = (std::log(s_to / s_from) - params.log_drift()) / sd;
    return std::exp(-0.5 * z * z) / (s_to * sd * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace rlhedge
