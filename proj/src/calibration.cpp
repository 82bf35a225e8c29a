#include "rlhedge/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

#include "rlhedge/errors.hpp"

namespace rlhedge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ParamBox make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    ParamBox box;
    box.lower = Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
    box.upper = Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
    return box;
}

}  // namespace

const ParamBox& parameter_box(ModelKind kind) {
    static const ParamBox bs = make_box({1e-4}, {5.0});
    static const ParamBox jd = make_box({1e-4, 0.0, -1.0, 1e-4}, {5.0, 10.0, 1.0, 2.0});
    // v0, kappa, theta, xi, rho
    static const ParamBox heston = make_box({1e-6, 1e-3, 1e-6, 1e-4, -0.999}, {4.0, 20.0, 4.0, 5.0, 0.999});
    switch (kind) {
        case ModelKind::BS: return bs;
        case ModelKind::JD: return jd;
        case ModelKind::Heston: return heston;
    }
    throw ParameterError("parameter_box: unknown model");
}

int min_quotes(ModelKind kind) {
    switch (kind) {
        case ModelKind::BS: return 1;
        case ModelKind::JD: return 4;
        case ModelKind::Heston: return 5;
    }
    return 1;
}

Eigen::VectorXd to_vector(const ModelParams& params) {
    return std::visit(
        [](const auto& p) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BsParams>) {
                return Eigen::VectorXd::Constant(1, p.sigma);
            } else if constexpr (std::is_same_v<T, JdParams>) {
                Eigen::VectorXd x(4);
                x << p.sigma, p.jump_intensity, p.jump_mean_log, p.jump_std_log;
                return x;
            } else {
                Eigen::VectorXd x(5);
                x << p.v0, p.kappa, p.theta, p.xi, p.rho;
                return x;
            }
        },
        params);
}

ModelParams from_vector(ModelKind kind, const Eigen::VectorXd& x) {
    switch (kind) {
        case ModelKind::BS: return BsParams{x(0)};
        case ModelKind::JD: return JdParams{x(0), x(1), x(2), x(3)};
        case ModelKind::Heston: return HestonParams{x(0), x(1), x(2), x(3), x(4)};
    }
    throw ParameterError("from_vector: unknown model");
}

std::vector<double> slice_model_prices(const OptionSlice& slice, const ModelParams& params) {
    std::vector<double> out(slice.quotes.size());
    if (const auto* h = std::get_if<HestonParams>(&params)) {
        // Group by (tau, forward, discount) so the characteristic function is shared.
        HestonOptions opt;
        opt.check_convergence = false;
        std::map<std::tuple<double, double, double>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < slice.quotes.size(); ++i) {
            const auto& q = slice.quotes[i];
            groups[{q.contract.tau_years, q.forward_quote.forward, q.forward_quote.discount}].push_back(i);
        }
        for (const auto& [key, idx] : groups) {
            std::vector<double> strikes;
            strikes.reserve(idx.size());
            for (auto i : idx) strikes.push_back(slice.quotes[i].contract.strike);
            const auto prices = heston_prices({std::get<1>(key), std::get<2>(key)}, std::get<0>(key), strikes, *h, opt);
            for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = prices[j];
        }
        return out;
    }
    for (std::size_t i = 0; i < slice.quotes.size(); ++i)
        out[i] = model_price(params, slice.quotes[i].forward_quote, slice.quotes[i].contract);
    return out;
}

// ---------------------------------------------------------------------------
// Nelder-Mead

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double step, int max_evals,
                             double f_tol) {
    const Eigen::Index n = x0.size();
    NelderMeadResult res;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : kInf;
    };
    auto project = [&](Eigen::VectorXd x) { return x.cwiseMax(lower).cwiseMin(upper).eval(); };

    std::vector<Eigen::VectorXd> simplex(n + 1, project(x0));
    std::vector<double> values(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v = x0;
        v(i) += (x0(i) + step <= upper(i)) ? step : -step;
        simplex[i + 1] = project(v);
    }
    for (Eigen::Index i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<Eigen::Index> order(n + 1);
    while (res.evaluations < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        const auto best = order.front();
        const auto worst = order.back();
        const auto second = order[n - 1];
        res.best_history.push_back(values[best]);
        ++res.iterations;

        const double spread = values[worst] - values[best];
        double size = 0.0;
        for (Eigen::Index i = 0; i <= n; ++i) size = std::max(size, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
        if ((std::isfinite(spread) && spread <= f_tol) || values[best] <= f_tol || size < 1e-13) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i <= n; ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd reflected = project(centroid + (centroid - simplex[worst]));
        const double f_r = eval(reflected);
        if (f_r < values[best]) {
            const Eigen::VectorXd expanded = project(centroid + 2.0 * (centroid - simplex[worst]));
            const double f_e = eval(expanded);
            if (f_e < f_r) {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
            continue;
        }
        if (f_r < values[second]) {
            simplex[worst] = reflected;
            values[worst] = f_r;
            continue;
        }
        const bool outside = f_r < values[worst];
        const Eigen::VectorXd contracted =
            outside ? project(centroid + 0.5 * (reflected - centroid)) : project(centroid + 0.5 * (simplex[worst] - centroid));
        const double f_c = eval(contracted);
        if (f_c < (outside ? f_r : values[worst])) {
            simplex[worst] = contracted;
            values[worst] = f_c;
            continue;
        }
        for (Eigen::Index i = 0; i <= n; ++i) {
            if (i == best) continue;
            simplex[i] = project(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
            values[i] = eval(simplex[i]);
        }
    }
    const auto best_it = std::min_element(values.begin(), values.end());
    res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
    res.fx = *best_it;
    return res;
}

Eigen::VectorXd halton_point(int k, int dim) {
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    if (dim > 10) throw ParameterError("halton_point: at most 10 dimensions");
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d) {
        double f = 1.0, r = 0.0;
        for (int i = k; i > 0; i /= primes[d]) {
            f /= primes[d];
            r += f * (i % primes[d]);
        }
        x(d) = r;
    }
    return x;
}

// ---------------------------------------------------------------------------

namespace {

struct SliceObjective {
    const OptionSlice& slice;
    ModelKind kind;
    const ParamBox& box;

    Eigen::VectorXd to_params(const Eigen::VectorXd& unit) const {
        return box.lower + unit.cwiseProduct(box.upper - box.lower);
    }

    /// Residuals model - market; empty optional if the pricer fails.
    std::optional<Eigen::VectorXd> residuals(const Eigen::VectorXd& unit) const {
        try {
            const auto prices = slice_model_prices(slice, from_vector(kind, to_params(unit)));
            Eigen::VectorXd r(static_cast<Eigen::Index>(prices.size()));
            for (std::size_t i = 0; i < prices.size(); ++i) {
                r(static_cast<Eigen::Index>(i)) = prices[i] - slice.quotes[i].mid_price;
                if (!std::isfinite(r(static_cast<Eigen::Index>(i)))) return std::nullopt;
            }
            return r;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    double operator()(const Eigen::VectorXd& unit) const {
        const auto r = residuals(unit);
        return r ? r->squaredNorm() : kInf;
    }
};

// Projected Levenberg-Marquardt in unit coordinates. Only improving steps are
// accepted, so the objective is non-increasing.
std::pair<Eigen::VectorXd, double> polish_lm(const SliceObjective& obj, Eigen::VectorXd x, double fx, int max_iter) {
    const Eigen::Index n = x.size();
    auto r = obj.residuals(x);
    if (!r) return {x, fx};
    double mu = 1e-3;
    for (int it = 0; it < max_iter && fx > 1e-30; ++it) {
        Eigen::MatrixXd jac(r->size(), n);
        bool ok = true;
        for (Eigen::Index j = 0; j < n && ok; ++j) {
            const double h = x(j) > 0.5 ? -1e-7 : 1e-7;
            Eigen::VectorXd xh = x;
            xh(j) += h;
            const auto rh = obj.residuals(xh);
            if (!rh) {
                ok = false;
                break;
            }
            jac.col(j) = (*rh - *r) / h;
        }
        if (!ok) break;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * *r;
        bool improved = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
            const Eigen::VectorXd dx = a.ldlt().solve(-jtr);
            const Eigen::VectorXd xn = (x + dx).cwiseMax(0.0).cwiseMin(1.0);
            const auto rn = obj.residuals(xn);
            if (rn && rn->squaredNorm() < fx) {
                x = xn;
                r = rn;
                fx = rn->squaredNorm();
                mu = std::max(mu * 0.3, 1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if (!improved) break;
    }
    return {x, fx};
}

}  // namespace

CalibrationResult calibrate(const OptionSlice& slice, ModelKind kind, const CalibrationOptions& opt) {
    const int n_quotes = static_cast<int>(slice.quotes.size());
    if (n_quotes < min_quotes(kind))
        throw InsufficientDataError("calibrate: " + std::string(to_string(kind)) + " needs at least " +
                                    std::to_string(min_quotes(kind)) + " quotes, slice has " +
                                    std::to_string(n_quotes));
    const ParamBox& box = parameter_box(kind);
    const SliceObjective objective{slice, kind, box};
    const auto dim = static_cast<int>(box.lower.size());
    const Eigen::VectorXd lo = Eigen::VectorXd::Zero(dim);
    const Eigen::VectorXd hi = Eigen::VectorXd::Ones(dim);

    CalibrationResult result;
    result.n_quotes = n_quotes;
    Eigen::VectorXd best_x;
    double best_f = kInf;
    bool any_converged = false;
    for (int k = 1; k <= opt.restarts; ++k) {
        // Start points kept away from the faces of the box.
        const Eigen::VectorXd start = (0.05 + 0.9 * halton_point(k, dim).array()).matrix();
        if (k == 1) result.initial_objective = objective(start);
        const auto nm = nelder_mead(objective, start, lo, hi, opt.simplex_step, opt.max_evals_per_restart, opt.f_tol);
        result.iterations += nm.iterations;
        if (nm.fx < best_f) {
            best_f = nm.fx;
            best_x = nm.x;
        }
        any_converged = any_converged || (nm.converged && std::isfinite(nm.fx));
    }
    if (!std::isfinite(best_f))
        throw CalibrationFailedError("calibrate: every restart failed for " + std::string(to_string(kind)));

    bool polished = false;
    if (opt.polish) {
        const auto [x, fx] = polish_lm(objective, best_x, best_f, opt.polish_iterations);
        polished = fx < best_f;
        best_x = x;
        best_f = fx;
    }
    result.model = from_vector(kind, objective.to_params(best_x));
    if (kind == ModelKind::Heston) {
        // Final price check with the quadrature convergence test enabled.
        try {
            const auto& h = std::get<HestonParams>(result.model);
            for (const auto& q : slice.quotes) (void)heston_price(q.forward_quote, q.contract, h);
        } catch (const NumericError& e) {
            throw CalibrationFailedError(std::string("calibrate: heston fit unusable: ") + e.what());
        }
    }
    result.objective = best_f;
    result.converged = (any_converged || polished) && best_f <= result.initial_objective;
    return result;
}

// ---------------------------------------------------------------------------

std::vector<MaturityBucket> default_buckets() {
    return {{14, 3, 20}, {28, 21, 41}, {56, 42, 70}};
}

std::optional<int> bucket_assign(int tau_days, const std::vector<MaturityBucket>& buckets) {
    for (const auto& b : buckets)
        if (tau_days >= b.lo_days && tau_days <= b.hi_days) return b.center_days;
    return std::nullopt;
}

OptionSlice bucket_slice(const OptionSlice& slice, int bucket_center, const std::vector<MaturityBucket>& buckets) {
    OptionSlice out;
    out.date = slice.date;
    out.underlying_close = slice.underlying_close;
    for (const auto& q : slice.quotes)
        if (bucket_assign(q.tau_days, buckets) == bucket_center) out.quotes.push_back(q);
    return out;
}

}  // namespace rlhedge
