#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlhedge/backtest.hpp"
#include "rlhedge/dataio.hpp"
#include "rlhedge/report.hpp"
#include "rlhedge/trainer.hpp"

namespace rlhedge {

// ---------------------------------------------------------------------------
// Per-day calibration

struct CalibrationRecord {
    Date date{};
    int bucket = 0;
    std::string model;  // bs, jd, heston
    std::string status = "ok";  // ok, calibration_failed
    std::optional<ModelParams> params;
    double objective = 0.0;
    int n_quotes = 0;
};

/// Fits every parametric model in `models` to each day's bucket cross-section.
/// Non-parametric names are ignored; failures are recorded, not thrown.
std::vector<CalibrationRecord> calibrate_slices(const std::vector<OptionSlice>& slices,
                                                const std::vector<std::string>& models,
                                                const std::vector<int>& bucket_centers,
                                                const std::vector<MaturityBucket>& bucket_defs,
                                                const CalibrationOptions& opt);

/// CSV with one column per parameter name across all models; unused columns are empty.
void write_calibration(const std::string& path, const std::vector<CalibrationRecord>& rows);
std::vector<CalibrationRecord> read_calibration(const std::string& path);

/// Backtest hook answering from a calibration table.
std::function<std::optional<ModelParams>(const Date&, int, const std::string&)> fitted_lookup(
    const std::vector<CalibrationRecord>& rows);

// ---------------------------------------------------------------------------
// Implied-volatility fit

/// Price of each quote under a trained policy. The policy is re-run in its
/// training environment with the quote's maturity spread over the training
/// step count, the quote's rate as drift and riskless rate, and prices scaled
/// so the strike matches the training strike.
std::vector<double> policy_quote_prices(const PolicyCheckpoint& ckpt, const OptionSlice& slice, int eval_paths,
                                        std::uint64_t seed);

/// IVRMSE per day, bucket, model and moneyness group. Parametric models use
/// their calibrated parameters; policies use policy_quote_prices.
std::vector<IvrmseRecord> ivrmse_records(const std::vector<OptionSlice>& slices, const std::string& asset,
                                         const std::vector<CalibrationRecord>& fits,
                                         const std::map<std::string, PolicyCheckpoint>& policies,
                                         const std::vector<int>& bucket_centers,
                                         const std::vector<MaturityBucket>& bucket_defs, int pricing_paths,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training and the end-to-end run

/// Trains "qlbs" or "rlop" from the run config; the seed is derived from the
/// root seed under "train/<method>".
TrainReport train_method(const RunConfig& cfg, const std::string& method, const std::string& log_path = {});

/// Writes <method>_checkpoint.json and <method>_train_summary.json under `dir`;
/// returns those plus the training log if it exists.
std::vector<std::string> write_training(const std::string& dir, const std::string& method, const TrainReport& report);

BacktestConfig backtest_config(const RunConfig& cfg, double cost_rate);

struct PipelineResult {
    std::map<std::string, PolicyCheckpoint> policies;
    std::map<std::string, TrainReport> training;
    std::vector<CalibrationRecord> fits;
    std::vector<OutcomeRow> outcomes;
    std::vector<IvrmseRecord> ivrmse;
    ReportFiles report;
    std::vector<std::string> outputs;  // every file written
};

/// generate -> ingest -> calibrate -> train -> backtest at each cost rate ->
/// report, writing every artifact and a manifest under `out_dir`.
PipelineResult run_pipeline(const RunConfig& cfg, const std::string& out_dir,
                            const std::vector<std::string>& argv = {});

}  // namespace rlhedge
