#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rlhedge/backtest.hpp"

namespace rlhedge {

/// Display name used in tables: bs -> BS, jd -> JD, heston -> SV, qlbs -> QLBS, rlop -> RLOP.
std::string model_label(std::string_view model);

/// One day's IVRMSE for one model and moneyness group.
struct IvrmseRecord {
    static constexpr int kSchemaVersion = 1;
    Date date{};
    std::string asset;
    std::string model;
    int bucket = 0;
    std::string group;  // label from ivrmse_groups()
    double value = 0.0;
    int n_used = 0;
    int n_dropped = 0;
};

void write_ivrmse(std::ostream& out, const std::vector<IvrmseRecord>& rows);
void write_ivrmse(const std::string& path, const std::vector<IvrmseRecord>& rows);
std::vector<IvrmseRecord> read_ivrmse(std::istream& in);
std::vector<IvrmseRecord> read_ivrmse(const std::string& path);

/// File name -> contents. Deterministic in its inputs, byte for byte.
using ReportFiles = std::map<std::string, std::string>;

/// Outcomes are grouped by setting (asset, quarter, bucket, target, cost rate)
/// and model; rows with a non-ok status are counted but not aggregated.
///
///   tail_report.csv   VaR/ES at 5% and 10%, shortfall probability, n_days
///   risk_cost.csv     mean tc and RMSE(xi), each with a 95% interval
///   scorecard.csv/md  best model per tail column within each setting
///   ecdf.csv          ECDF points of pnl_net per setting and model
///   summary.json      all of the above as one document
///   ivrmse.csv/md     equal-day IVRMSE by group, quarter and asset (when given)
ReportFiles build_report(const std::vector<OutcomeRow>& outcomes, const std::vector<IvrmseRecord>& ivrmse = {});

/// Writes each file under `dir` and returns the paths in name order.
std::vector<std::string> write_report(const ReportFiles& files, const std::string& dir);

}  // namespace rlhedge
