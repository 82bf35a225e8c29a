#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rlhedge/calibration.hpp"

namespace rlhedge {

/// max(0, -pnl).
double shortfall(double pnl);

struct VarEs {
    double var = 0.0;
    double es = 0.0;
};

/// Tail statistics of the shortfall SF = max(0, -pnl). VaR is the ceiling
/// order statistic: sorted SF ascending, 1-based index ceil((1 - alpha) n).
/// ES is the mean of all SF values >= VaR. Throws InsufficientDataError on an
/// empty sample, ParameterError unless 0 < alpha < 1.
VarEs es_alpha(std::span<const double> pnl, double alpha);

/// Fraction of strictly negative outcomes.
double shortfall_prob(std::span<const double> pnl);

/// Right-continuous ECDF as (value, P(X <= value)) at each distinct value.
std::vector<std::pair<double, double>> ecdf(std::span<const double> values);

struct MeanCi {
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Mean with a normal-approximation 95% interval (sample SE).
MeanCi mean_ci(std::span<const double> x);

/// sqrt(mean xi^2); the interval is the 95% interval of mean xi^2 with the
/// bounds square-rooted (a negative lower bound maps to 0).
MeanCi rmse_xi(std::span<const double> xi);

struct RiskCostPoint {
    MeanCi mean_tc;
    MeanCi rmse_xi;
    int n = 0;
};
RiskCostPoint risk_cost_point(std::span<const double> tc, std::span<const double> xi);

struct TailReport {
    VarEs tail_05;
    VarEs tail_10;
    double shortfall_prob = 0.0;
    int n_days = 0;
    std::vector<std::pair<double, double>> ecdf;
};
TailReport tail_report(std::span<const double> pnl);

/// Unweighted mean over days; each day contributes one observation.
double equal_day_mean(std::span<const double> per_day);

// ---------------------------------------------------------------------------
// Implied-volatility fit

struct IvrmseDay {
    double value = 0.0;  // 10^2 x RMSE of implied-vol gaps
    int n_used = 0;
    int n_dropped = 0;   // quotes whose market or model price has no implied vol
};

/// IVRMSE over the quotes of `slice` for which `keep(quote)` holds. Quotes
/// whose market or model price lies outside the no-arbitrage band are dropped
/// and counted. Throws InsufficientDataError when nothing is left.
IvrmseDay ivrmse_day(const OptionSlice& slice, const std::vector<double>& model_prices,
                     const std::function<bool(const OptionQuote&)>& keep = {});

/// Moneyness groups of the IVRMSE table: whole slice, K/F < 1, K/F > 1, K/F > 1.03.
struct MoneynessGroup {
    std::string label;
    std::function<bool(const OptionQuote&)> keep;
};
std::vector<MoneynessGroup> ivrmse_groups();

// ---------------------------------------------------------------------------
// Scorecards

/// Tail summary of one model in one setting (asset, period, bucket, target).
struct ScoreInput {
    std::string setting;
    std::string model;
    double es_05 = 0.0;
    double es_10 = 0.0;
    double shortfall_prob = 0.0;
    int n_days = 0;
};

struct ScoreRow {
    std::string setting;
    std::string best_es_05;  // joint winners as "A/B"
    double es_05 = 0.0;
    std::string best_es_10;
    double es_10 = 0.0;
    std::string best_shortfall;
    double shortfall_prob = 0.0;
    int n_days = 0;
};

/// Lowest value per column within each setting; exact ties are listed jointly
/// in input order. Settings appear in first-seen order.
std::vector<ScoreRow> scorecard(const std::vector<ScoreInput>& entries);

}  // namespace rlhedge
