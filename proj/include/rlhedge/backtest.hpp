#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlhedge/calibration.hpp"
#include "rlhedge/marketsim.hpp"
#include "rlhedge/neuralpolicy.hpp"
#include "rlhedge/pricers.hpp"

namespace rlhedge {

/// What a delta rule sees at a rebalance.
struct HedgeContext {
    int step = 0;           // rebalance index, 0 at inception
    int n_steps = 1;        // rebalances over the contract's life
    double spot = 0.0;      // price the trade executes at
    double s0 = 0.0;        // price at inception
    double strike = 0.0;
    double elapsed_years = 0.0;
    double tau_years = 0.0;  // remaining life, > 0
};

/// Hedge position (shares per short call) for a context.
using DeltaRule = std::function<double(const HedgeContext&)>;

/// Parametric model delta with rate r and carry b held at their inception values:
/// F = S e^{b tau}, DF = e^{-r tau}.
DeltaRule model_delta_rule(const ModelParams& model, double rate, double carry);

/// Delta from a trained QLBS or RLOP policy. The contract's life is mapped onto
/// the policy's normalized clock (t / T = step / n_steps) and prices are
/// rescaled so the contract's moneyness K / S0 matches the training strike.
DeltaRule policy_delta_rule(const PolicyCheckpoint& ckpt);

struct HedgePlan {
    DeltaRule delta;
    double cost_rate = 0.0;  // c
    double premium = 0.0;    // initial cash
    double rate = 0.0;       // cash accrues at e^{rate dt} between rebalances

    void validate() const;
};

/// Observed prices and their times in years from inception; the last entry is
/// the contract's expiry.
struct RealizedPath {
    Eigen::VectorXd prices;
    Eigen::VectorXd times;
};

struct HedgeOutcome {
    double pnl_net = 0.0;
    double tc_total = 0.0;
    double xi = 0.0;  // pnl_net + tc_total
    int n_rebalances = 0;
};

/// Short call hedged at every observation before expiry. The cash account
/// starts at the premium, each trade pays c |dDelta| S including the first
/// one, and the final stock position is marked to market without a closing
/// trade. Throws DataError for fewer than two observations or unsorted times
/// and NumericError when the rule returns a non-finite position.
HedgeOutcome run_hedge(const HedgePlan& plan, const RealizedPath& path, double strike);

/// GBM path convenience: observation k sits at k dt.
HedgeOutcome run_hedge(const HedgePlan& plan, const PricePath& path, const GbmParams& gbm, double strike);

/// Quote in the bucket whose K/F is closest to target; equidistant quotes
/// resolve to the lower strike. nullopt when the bucket is empty.
std::optional<OptionQuote> select_contract(const OptionSlice& slice, double target_moneyness, int bucket_center,
                                           const std::vector<MaturityBucket>& buckets = default_buckets());

// ---------------------------------------------------------------------------
// Day-by-day market backtest

struct OutcomeRow {
    static constexpr int kSchemaVersion = 1;
    Date date{};
    std::string asset;
    std::string model;  // bs, jd, heston, qlbs, rlop
    int bucket = 0;
    double target_moneyness = 0.0;
    double cost_rate = 0.0;
    double pnl_net = 0.0;
    double tc_total = 0.0;
    double xi = 0.0;
    int n_rebalances = 0;
    std::string status = "ok";  // ok, no_contract, incomplete_path, calibration_failed, delta_failed
};

struct BacktestConfig {
    std::string asset = "SYN";
    std::vector<int> buckets{28};
    std::vector<double> targets{1.0, 1.03};
    double cost_rate = 0.0;
    std::vector<MaturityBucket> bucket_defs = default_buckets();
    CalibrationOptions calibration;
    /// Supplies fitted parameters for (day, bucket, model) instead of calibrating;
    /// nullopt marks a failed fit.
    std::function<std::optional<ModelParams>(const Date&, int, const std::string&)> fitted;
};

/// Runs every (day, bucket, target, model). Parametric models are calibrated
/// on the day's bucket cross-section and keep those parameters until expiry;
/// policies come from `policies`, keyed by method name. The realized path is
/// the underlying close of each later slice up to the expiry date, which must
/// be covered by the data. Failed cases are kept with a non-ok status.
std::vector<OutcomeRow> backtest_slices(const std::vector<OptionSlice>& slices, const std::vector<std::string>& models,
                                        const std::map<std::string, PolicyCheckpoint>& policies,
                                        const BacktestConfig& cfg);

}  // namespace rlhedge
