#include "rlhedge/riskmetrics.hpp"

#include <algorithm>
#include <cmath>

#include "rlhedge/errors.hpp"

namespace rlhedge {

namespace {

constexpr double kZ95 = 1.959963984540054;

}  // namespace

double shortfall(double pnl) { return pnl < 0.0 ? -pnl : 0.0; }

VarEs es_alpha(std::span<const double> pnl, double alpha) {
    if (pnl.empty()) throw InsufficientDataError("es_alpha: empty sample");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("es_alpha: alpha must lie in (0, 1)");
    std::vector<double> sf(pnl.size());
    std::transform(pnl.begin(), pnl.end(), sf.begin(), shortfall);
    std::sort(sf.begin(), sf.end());
    const auto n = static_cast<double>(sf.size());
    // Guard the ceiling against (1 - alpha) n landing a rounding step above an integer.
    double pos = (1.0 - alpha) * n;
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9 * n) pos = nearest;
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(pos)), 1, sf.size());
    VarEs out;
    out.var = sf[k - 1];
    const auto first = std::lower_bound(sf.begin(), sf.end(), out.var);
    double sum = 0.0;
    for (auto it = first; it != sf.end(); ++it) sum += *it;
    out.es = sum / static_cast<double>(sf.end() - first);
    return out;
}

double shortfall_prob(std::span<const double> pnl) {
    if (pnl.empty()) throw InsufficientDataError("shortfall_prob: empty sample");
    const auto losses = std::count_if(pnl.begin(), pnl.end(), [](double x) { return x < 0.0; });
    return static_cast<double>(losses) / static_cast<double>(pnl.size());
}

std::vector<std::pair<double, double>> ecdf(std::span<const double> values) {
    if (values.empty()) throw InsufficientDataError("ecdf: empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i + 1 == v.size() || v[i + 1] != v[i]) out.emplace_back(v[i], static_cast<double>(i + 1) / n);
    return out;
}

MeanCi mean_ci(std::span<const double> x) {
    if (x.empty()) throw InsufficientDataError("mean_ci: empty sample");
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double se = x.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return {mean, mean - kZ95 * se, mean + kZ95 * se};
}

MeanCi rmse_xi(std::span<const double> xi) {
    std::vector<double> sq(xi.size());
    std::transform(xi.begin(), xi.end(), sq.begin(), [](double v) { return v * v; });
    const auto m = mean_ci(sq);
    return {std::sqrt(m.value), std::sqrt(std::max(m.lo, 0.0)), std::sqrt(m.hi)};
}

RiskCostPoint risk_cost_point(std::span<const double> tc, std::span<const double> xi) {
    if (tc.size() != xi.size()) throw ParameterError("risk_cost_point: tc and xi differ in length");
    return {mean_ci(tc), rmse_xi(xi), static_cast<int>(tc.size())};
}

TailReport tail_report(std::span<const double> pnl) {
    TailReport r;
    r.tail_05 = es_alpha(pnl, 0.05);
    r.tail_10 = es_alpha(pnl, 0.10);
    r.shortfall_prob = shortfall_prob(pnl);
    r.n_days = static_cast<int>(pnl.size());
    r.ecdf = ecdf(pnl);
    return r;
}

double equal_day_mean(std::span<const double> per_day) { return mean_ci(per_day).value; }

// ---------------------------------------------------------------------------

IvrmseDay ivrmse_day(const OptionSlice& slice, const std::vector<double>& model_prices,
                     const std::function<bool(const OptionQuote&)>& keep) {
    if (model_prices.size() != slice.quotes.size())
        throw ParameterError("ivrmse_day: one model price per quote expected");
    IvrmseDay out;
    double ss = 0.0;
    for (std::size_t i = 0; i < slice.quotes.size(); ++i) {
        const auto& q = slice.quotes[i];
        if (keep && !keep(q)) continue;
        try {
            const double iv_mkt = implied_vol(q.forward_quote, q.contract, q.mid_price);
            const double iv_model = implied_vol(q.forward_quote, q.contract, model_prices[i]);
            ss += (iv_model - iv_mkt) * (iv_model - iv_mkt);
            ++out.n_used;
        } catch (const NoSolutionError&) {
            ++out.n_dropped;
        }
    }
    if (out.n_used == 0) throw InsufficientDataError("ivrmse_day: no invertible quotes");
    out.value = 100.0 * std::sqrt(ss / out.n_used);
    return out;
}

std::vector<MoneynessGroup> ivrmse_groups() {
    const auto kf = [](const OptionQuote& q) { return q.contract.strike / q.forward_quote.forward; };
    return {{"Whole sample", [](const OptionQuote&) { return true; }},
            {"Moneyness <1", [kf](const OptionQuote& q) { return kf(q) < 1.0; }},
            {"Moneyness >1", [kf](const OptionQuote& q) { return kf(q) > 1.0; }},
            {"Moneyness >1.03", [kf](const OptionQuote& q) { return kf(q) > 1.03; }}};
}

// ---------------------------------------------------------------------------

std::vector<ScoreRow> scorecard(const std::vector<ScoreInput>& entries) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const ScoreInput*>> groups;
    for (const auto& e : entries) {
        if (!groups.contains(e.setting)) order.push_back(e.setting);
        groups[e.setting].push_back(&e);
    }
    const auto best = [](const std::vector<const ScoreInput*>& g, double ScoreInput::*field, std::string* names) {
        double lo = g.front()->*field;
        for (const auto* e : g) lo = std::min(lo, e->*field);
        names->clear();
        for (const auto* e : g)
            if (e->*field == lo) *names += (names->empty() ? "" : "/") + e->model;
        return lo;
    };
    std::vector<ScoreRow> rows;
    for (const auto& setting : order) {
        const auto& g = groups[setting];
        ScoreRow r;
        r.setting = setting;
        r.es_05 = best(g, &ScoreInput::es_05, &r.best_es_05);
        r.es_10 = best(g, &ScoreInput::es_10, &r.best_es_10);
        r.shortfall_prob = best(g, &ScoreInput::shortfall_prob, &r.best_shortfall);
        for (const auto* e : g) r.n_days = std::max(r.n_days, e->n_days);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace rlhedge
