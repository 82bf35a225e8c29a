#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>  // nlohmann::json, vendored

#include "rlhedge/backtest.hpp"
#include "rlhedge/calibration.hpp"
#include "rlhedge/pricers.hpp"
#include "rlhedge/qlbs_env.hpp"
#include "rlhedge/rlop_env.hpp"
#include "rlhedge/trainer.hpp"

namespace rlhedge {

/// ISO-8601 calendar date, YYYY-MM-DD. Throws DataError on anything else.
Date parse_date(std::string_view s);
std::string format_date(const Date& d);
/// "2020Q1" style label.
std::string quarter_label(const Date& d);

/// Shortest text that parses back to the same double.
std::string format_double(double x);
/// Strict parse of a whole field; throws DataError.
double parse_double(std::string_view s);
int parse_int(std::string_view s);

/// {"kind": "bs" | "jd" | "heston", <fields>}; unknown fields throw DataError.
nlohmann::json model_params_json(const ModelParams& m);
ModelParams model_params_from_json(const nlohmann::json& j);
/// Field names in to_vector order.
std::vector<std::string> model_param_names(ModelKind kind);

// ---------------------------------------------------------------------------
// Slice files: date, expiry_date, strike, mid_price, forward, discount, underlying_close

inline constexpr int kSliceSchemaVersion = 1;

struct IngestOptions {
    int min_days = 3;   // inclusive
    int max_days = 70;  // inclusive
};

struct IngestResult {
    std::vector<OptionSlice> slices;  // by date; quotes by (expiry, strike)
    int n_rows = 0;
    int n_filtered = 0;  // outside [min_days, max_days]
};

/// Columns are located by header name; a schema_version column is optional.
/// Throws DataError naming the line for malformed or invalid rows, and for an
/// empty file.
IngestResult ingest(std::istream& in, const IngestOptions& opt = {});
IngestResult ingest(const std::string& path, const IngestOptions& opt = {});

void write_slices(std::ostream& out, const std::vector<OptionSlice>& slices);
void write_slices(const std::string& path, const std::vector<OptionSlice>& slices);

// ---------------------------------------------------------------------------
// Synthetic chains

struct SyntheticSpec {
    ModelParams model = BsParams{0.2};
    double s0 = 100.0;
    double mu = 0.05;           // drift of the underlying path
    double path_sigma = 0.2;    // volatility of the underlying path
    double rate = 0.03;         // continuously compounded
    double carry = 0.03;        // F = S e^{carry tau}
    int n_days = 20;            // trading days (weekdays)
    Date start{std::chrono::year{2024}, std::chrono::month{1}, std::chrono::day{2}};
    std::vector<double> moneyness{0.9, 0.95, 0.97, 1.0, 1.03, 1.05, 1.1};  // K / F
    int min_days = 3;           // listed expiries are Fridays in [min_days, max_days]
    int max_days = 70;
    double noise_bp = 0.0;      // uniform relative price noise, +-noise_bp 1e-4
    std::uint64_t seed = 1;
};

struct SyntheticData {
    std::vector<OptionSlice> slices;
    nlohmann::json truth;  // generating parameters
};

/// Daily chains priced by the spec's model on a GBM underlying path sampled on
/// weekdays in calendar time. Throws DataError when n_days < 1.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Outcome files

void write_outcomes(std::ostream& out, const std::vector<OutcomeRow>& rows);
void write_outcomes(const std::string& path, const std::vector<OutcomeRow>& rows);
/// Rejects rows with status ok whose xi differs from pnl_net + tc_total.
std::vector<OutcomeRow> read_outcomes(std::istream& in);
std::vector<OutcomeRow> read_outcomes(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration (JSON)

struct RunConfig {
    std::uint64_t seed = 2024;
    std::string output_dir = "out";
    std::string asset = "SYN";
    GbmParams gbm{0.04, 0.2, 0.04, 1.0, 8, (2.0 / 12.0) / 8};
    QlbsConfig qlbs;
    RlopConfig rlop;
    TrainConfig train;
    std::vector<double> cost_rates{0.0, 0.0005};
    std::vector<std::string> models{"bs", "jd", "heston", "qlbs", "rlop"};
    std::vector<MaturityBucket> buckets{default_buckets()};
    std::vector<int> bucket_centers{28};
    std::vector<double> targets{1.0, 1.03};
    CalibrationOptions calibration;
    SyntheticSpec synthetic;
    int pricing_paths = 2000;  // policy prices for the implied-vol diagnostic

    RunConfig();
};

/// Defaults as JSON, one documented entry per key.
nlohmann::json run_config_defaults();
/// Text reference of every key with its default and meaning.
std::string run_config_reference();
/// Overlays `j` on the defaults. Unknown keys and wrong types throw DataError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

// ---------------------------------------------------------------------------
// Manifests

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

/// Written next to every CLI output: command line, config and its digest,
/// seeds, versions and a digest of each output file.
void write_manifest(const std::string& dir, const std::string& command, const std::vector<std::string>& argv,
                    const nlohmann::json& config, const std::vector<std::string>& outputs);

}  // namespace rlhedge
