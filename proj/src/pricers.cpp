#include "rlhedge/pricers.hpp"

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <boost/math/tools/toms748_solve.hpp>

#include "rlhedge/errors.hpp"

namespace rlhedge {

void OptionContract::validate() const {
    if (!(strike > 0.0) || !std::isfinite(strike)) throw ParameterError("contract: strike must be > 0");
    if (!(tau_years > 0.0) || !std::isfinite(tau_years)) throw ParameterError("contract: tau_years must be > 0");
    if (!is_call) throw ParameterError("contract: only calls are supported");
}

void ForwardQuote::validate() const {
    if (!(forward > 0.0) || !std::isfinite(forward)) throw ParameterError("quote: forward must be > 0");
    if (!(discount > 0.0 && discount <= 1.0)) throw ParameterError("quote: discount must lie in (0, 1]");
}

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::BS: return "bs";
        case ModelKind::JD: return "jd";
        case ModelKind::Heston: return "heston";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
    if (name == "bs" || name == "BS") return ModelKind::BS;
    if (name == "jd" || name == "JD") return ModelKind::JD;
    if (name == "heston" || name == "Heston" || name == "sv" || name == "SV") return ModelKind::Heston;
    throw ParameterError("unknown model kind '" + std::string(name) + "'");
}

ModelKind kind_of(const ModelParams& params) {
    return static_cast<ModelKind>(params.index());
}

void validate(const ModelParams& params) {
    auto nonneg = [](double v, const char* what) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError(std::string(what) + " must be finite and >= 0");
    };
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BsParams>) {
                nonneg(p.sigma, "sigma");
            } else if constexpr (std::is_same_v<T, JdParams>) {
                nonneg(p.sigma, "sigma");
                nonneg(p.jump_intensity, "jump_intensity");
                nonneg(p.jump_std_log, "jump_std_log");
                if (!std::isfinite(p.jump_mean_log)) throw ParameterError("jump_mean_log must be finite");
            } else {
                nonneg(p.v0, "v0");
                nonneg(p.theta, "theta");
                nonneg(p.xi, "xi");
                nonneg(p.kappa, "kappa");
                if (!(p.rho >= -1.0 && p.rho <= 1.0)) throw ParameterError("rho must lie in [-1, 1]");
            }
        },
        params);
}

// ---------------------------------------------------------------------------
// Black-76

double black76_price(const ForwardQuote& q, const OptionContract& c, double sigma) {
    q.validate();
    c.validate();
    if (!(sigma >= 0.0)) throw ParameterError("black76: sigma must be >= 0");
    return q.discount * black_call_undiscounted(q.forward, c.strike, sigma * std::sqrt(c.tau_years));
}

double black76_delta(const ForwardQuote& q, const OptionContract& c, double sigma, double spot) {
    q.validate();
    c.validate();
    if (!(sigma >= 0.0)) throw ParameterError("black76: sigma must be >= 0");
    const double sd = sigma * std::sqrt(c.tau_years);
    double n_d1;
    if (sd > 0.0) {
        const double d1 = (std::log(q.forward / c.strike) + 0.5 * sd * sd) / sd;
        n_d1 = norm_cdf(d1);
    } else {
        n_d1 = q.forward > c.strike ? 1.0 : 0.0;
    }
    return q.discount * n_d1 * q.forward / spot;
}

double black76_vega(const ForwardQuote& q, const OptionContract& c, double sigma) {
    const double sqrt_tau = std::sqrt(c.tau_years);
    const double sd = sigma * sqrt_tau;
    if (!(sd > 0.0)) return 0.0;
    const double d1 = (std::log(q.forward / c.strike) + 0.5 * sd * sd) / sd;
    return q.discount * q.forward * norm_pdf(d1) * sqrt_tau;
}

// ---------------------------------------------------------------------------
// Merton

namespace {

template <typename Term>
double merton_series(const JdParams& p, double tau, const MertonOptions& opt, Term&& term) {
    const double mean_count = p.jump_intensity * tau;
    double weight = std::exp(-mean_count);
    double sum = 0.0;
    for (int n = 0; n <= opt.max_terms; ++n) {
        if (n > 0) weight *= mean_count / n;
        sum += weight * term(n);
        if (n + 1 >= opt.min_terms && n >= mean_count && weight < opt.weight_tol) return sum;
    }
    throw NumericError("merton: jump series did not converge within " + std::to_string(opt.max_terms) + " terms");
}

struct MertonTerm {
    double forward;
    double sd;
};

MertonTerm merton_term(const ForwardQuote& q, const JdParams& p, double tau, int n) {
    const double jump_comp = std::exp(p.jump_mean_log + 0.5 * p.jump_std_log * p.jump_std_log) - 1.0;
    const double fwd = q.forward * std::exp(-p.jump_intensity * jump_comp * tau +
                                            n * (p.jump_mean_log + 0.5 * p.jump_std_log * p.jump_std_log));
    // n = 0 keeps sigma sqrt(tau) so a jump-free model reproduces Black-76 bit for bit.
    const double sd = n == 0 ? p.sigma * std::sqrt(tau)
                             : std::sqrt(p.sigma * p.sigma * tau + n * p.jump_std_log * p.jump_std_log);
    return {fwd, sd};
}

}  // namespace

double merton_price(const ForwardQuote& q, const OptionContract& c, const JdParams& p, const MertonOptions& opt) {
    validate(ModelParams{p});
    q.validate();
    c.validate();
    const double undiscounted = merton_series(p, c.tau_years, opt, [&](int n) {
        const auto t = merton_term(q, p, c.tau_years, n);
        return black_call_undiscounted(t.forward, c.strike, t.sd);
    });
    return q.discount * undiscounted;
}

double merton_delta(const ForwardQuote& q, const OptionContract& c, const JdParams& p, double spot,
                    const MertonOptions& opt) {
    validate(ModelParams{p});
    q.validate();
    c.validate();
    if (p.jump_intensity == 0.0) return black76_delta(q, c, p.sigma, spot);
    const double dfwd = merton_series(p, c.tau_years, opt, [&](int n) {
        const auto t = merton_term(q, p, c.tau_years, n);
        double n_d1;
        if (t.sd > 0.0)
            n_d1 = norm_cdf((std::log(t.forward / c.strike) + 0.5 * t.sd * t.sd) / t.sd);
        else
            n_d1 = t.forward > c.strike ? 1.0 : 0.0;
        return n_d1 * t.forward;
    });
    return q.discount * dfwd / spot;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre

namespace {

GaussLegendreRule compute_gauss_legendre(int n) {
    GaussLegendreRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (x * p0 - p1) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

}  // namespace

const GaussLegendreRule& gauss_legendre(int order) {
    if (order < 1) throw ParameterError("gauss_legendre: order must be >= 1");
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const GaussLegendreRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[order];
    if (!slot) slot = std::make_unique<const GaussLegendreRule>(compute_gauss_legendre(order));
    return *slot;
}

// ---------------------------------------------------------------------------
// Heston

namespace {

using cplx = std::complex<double>;

// E[exp(i z X)] for X = ln(S_T / F) at z = u - i/2, where the exponent
// simplifies to alpha = -(u^2 + 1/4) / 2. The "little trap" root is used, and
// every ratio with xi^2 in the denominator is rewritten so it stays finite as
// xi -> 0 (where it reduces to the deterministic-variance Black case).
cplx heston_cf_lewis(double u, double tau, const HestonParams& p) {
    const double alpha = -0.5 * (u * u + 0.25);
    const cplx iz(0.5, u);  // i z
    const cplx beta = p.kappa - p.rho * p.xi * iz;
    const double xi2 = p.xi * p.xi;
    const cplx d = std::sqrt(beta * beta - 2.0 * xi2 * alpha);
    const cplx bpd = beta + d;
    const cplx e = std::exp(-d * tau);
    const cplx q = 2.0 * alpha / (bpd * bpd);  // g / xi^2
    const cplx g = xi2 * q;
    const cplx big_d = (2.0 * alpha / bpd) * (1.0 - e) / (1.0 - g * e);
    cplx log_term;  // ln((1 - g e) / (1 - g)) / xi^2
    if (std::abs(g) < 1e-8)
        log_term = q * (1.0 - e) + 0.5 * xi2 * q * q * (1.0 - e * e);
    else
        log_term = std::log((1.0 - g * e) / (1.0 - g)) / xi2;
    const cplx big_c = p.kappa * p.theta * (2.0 * alpha * tau / bpd - 2.0 * log_term);
    return std::exp(big_c + big_d * p.v0);
}

double expected_integrated_variance(const HestonParams& p, double tau) {
    if (p.kappa * tau < 1e-10) return p.v0 * tau;
    return p.theta * tau + (p.v0 - p.theta) * (1.0 - std::exp(-p.kappa * tau)) / p.kappa;
}

std::vector<double> heston_undiscounted(double forward, double tau, std::span<const double> strikes,
                                        const HestonParams& p, int order, double upper) {
    // Composite rule: panels [0, 1/2], [1/2, 2], [2, 8], ... growing by 4x up to
    // `upper`, each carrying order / 8 nodes (at least 4). The integrand's poles
    // at u = +-i/2 sit next to the origin, which a single wide panel resolves badly.
    // Panel width is capped so that exp(i u k) turns at most twice per panel.
    const int per_panel = std::max(4, order / 8);
    const auto& rule = gauss_legendre(per_panel);
    std::vector<double> log_moneyness(strikes.size());
    double max_abs_k = 0.0;
    for (std::size_t k = 0; k < strikes.size(); ++k) {
        log_moneyness[k] = std::log(forward / strikes[k]);
        max_abs_k = std::max(max_abs_k, std::abs(log_moneyness[k]));
    }
    const double max_width = max_abs_k > 0.0 ? std::max(1.0, 4.0 * std::numbers::pi / max_abs_k) : upper;
    std::vector<double> integral(strikes.size(), 0.0);
    double a = 0.0;
    double b = 0.5;
    while (a < upper) {
        b = std::min(b, upper);
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (b + a);
        for (int j = 0; j < per_panel; ++j) {
            const double u = mid + half * rule.nodes[j];
            const cplx phi = heston_cf_lewis(u, tau, p);
            const double w = rule.weights[j] * half / (u * u + 0.25);
            for (std::size_t k = 0; k < strikes.size(); ++k) {
                const double angle = u * log_moneyness[k];
                integral[k] += w * (std::cos(angle) * phi.real() - std::sin(angle) * phi.imag());
            }
        }
        a = b;
        b = std::min(4.0 * b, a + max_width);
    }
    std::vector<double> out(strikes.size());
    for (std::size_t k = 0; k < strikes.size(); ++k)
        out[k] = forward - std::sqrt(forward * strikes[k]) / std::numbers::pi * integral[k];
    return out;
}

}  // namespace

std::vector<double> heston_prices(const ForwardQuote& q, double tau_years, std::span<const double> strikes,
                                  const HestonParams& p, const HestonOptions& opt) {
    validate(ModelParams{p});
    q.validate();
    if (!(tau_years > 0.0)) throw ParameterError("heston: tau must be > 0");
    const double w = std::max(expected_integrated_variance(p, tau_years), 1e-300);
    const double upper = std::clamp(std::sqrt(80.0 / w), opt.upper_limit, opt.max_upper_limit);
    auto prices = heston_undiscounted(q.forward, tau_years, strikes, p, opt.order, upper);
    if (opt.check_convergence) {
        const auto fine = heston_undiscounted(q.forward, tau_years, strikes, p, 2 * opt.order, upper);
        const double scale = std::max(1.0, q.forward);
        for (std::size_t k = 0; k < prices.size(); ++k) {
            if (!std::isfinite(fine[k]) || std::abs(fine[k] - prices[k]) > opt.convergence_tol * scale)
                throw NumericError("heston: quadrature did not converge (order " + std::to_string(opt.order) +
                                   " vs " + std::to_string(2 * opt.order) + ")");
        }
    }
    for (std::size_t k = 0; k < prices.size(); ++k) {
        if (!std::isfinite(prices[k])) throw NumericError("heston: non-finite price");
        // Clip quadrature noise to the no-arbitrage band.
        const double lower = std::max(q.forward - strikes[k], 0.0);
        prices[k] = q.discount * std::clamp(prices[k], lower, q.forward);
    }
    return prices;
}

double heston_price(const ForwardQuote& q, const OptionContract& c, const HestonParams& p, const HestonOptions& opt) {
    const double k[1] = {c.strike};
    return heston_prices(q, c.tau_years, k, p, opt)[0];
}

double heston_delta(const ForwardQuote& q, const OptionContract& c, const HestonParams& p, double spot,
                    const HestonOptions& opt) {
    const double h = 1e-4 * spot;
    ForwardQuote up = q, down = q;
    up.forward = q.forward * (spot + h) / spot;
    down.forward = q.forward * (spot - h) / spot;
    return (heston_price(up, c, p, opt) - heston_price(down, c, p, opt)) / (2.0 * h);
}

// ---------------------------------------------------------------------------

double model_price(const ModelParams& m, const ForwardQuote& q, const OptionContract& c) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BsParams>)
                return black76_price(q, c, p.sigma);
            else if constexpr (std::is_same_v<T, JdParams>)
                return merton_price(q, c, p);
            else
                return heston_price(q, c, p);
        },
        m);
}

double model_delta(const ModelParams& m, const ForwardQuote& q, const OptionContract& c, double spot) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BsParams>)
                return black76_delta(q, c, p.sigma, spot);
            else if constexpr (std::is_same_v<T, JdParams>)
                return merton_delta(q, c, p, spot);
            else
                return heston_delta(q, c, p, spot);
        },
        m);
}

double implied_vol(const ForwardQuote& q, const OptionContract& c, double price) {
    q.validate();
    c.validate();
    const double lower = q.discount * std::max(q.forward - c.strike, 0.0);
    const double upper = q.discount * q.forward;
    if (!std::isfinite(price) || price < lower || price >= upper)
        throw NoSolutionError("implied_vol: price " + std::to_string(price) + " outside (" + std::to_string(lower) +
                              ", " + std::to_string(upper) + ")");
    if (price == lower) return 0.0;

    const double target = price / q.discount;
    auto f = [&](double sd) { return black_call_undiscounted(q.forward, c.strike, sd) - target; };
    double hi = 1.0;
    while (f(hi) <= 0.0) {
        hi *= 2.0;
        if (hi > 1e3) throw NoSolutionError("implied_vol: price too close to the upper bound");
    }
    const double f_lo = f(0.0);
    if (f_lo >= 0.0) return 0.0;
    std::uintmax_t max_iter = 300;
    const auto bracket = boost::math::tools::toms748_solve(f, 0.0, hi, f_lo, f(hi),
                                                           boost::math::tools::eps_tolerance<double>(52), max_iter);
    const double sd = 0.5 * (bracket.first + bracket.second);
    return sd / std::sqrt(c.tau_years);
}

}  // namespace rlhedge
