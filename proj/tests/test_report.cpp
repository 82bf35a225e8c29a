#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rlhedge/dataio.hpp"
#include "rlhedge/errors.hpp"
#include "rlhedge/report.hpp"

using namespace rlhedge;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const std::string kFixtures = RLHEDGE_FIXTURE_DIR;

OutcomeRow ok_row(const std::string& date, const std::string& model, double pnl, double tc) {
    OutcomeRow r;
    r.date = parse_date(date);
    r.asset = "SYN";
    r.model = model;
    r.bucket = 28;
    r.target_moneyness = 1.0;
    r.pnl_net = pnl;
    r.tc_total = tc;
    r.xi = pnl + tc;
    r.n_rebalances = 20;
    return r;
}

IvrmseRecord iv(const std::string& date, const std::string& asset, const std::string& model,
                const std::string& group, double value) {
    return {parse_date(date), asset, model, 28, group, value, 5, 0};
}

}  // namespace

TEST(Report, GoldenSummaryIsByteIdentical) {
    const auto rows = read_outcomes(kFixtures + "/outcomes_golden.csv");
    const auto files = build_report(rows);
    EXPECT_EQ(files.at("summary.json"), slurp(kFixtures + "/report_golden/summary.json"));
}

TEST(Report, DeterministicAndComplete) {
    const auto rows = read_outcomes(kFixtures + "/outcomes_golden.csv");
    const auto a = build_report(rows);
    const auto b = build_report(rows);
    EXPECT_EQ(a, b);
    for (const auto* name : {"tail_report.csv", "risk_cost.csv", "ecdf.csv", "scorecard.csv", "scorecard.md",
                             "summary.json"})
        EXPECT_TRUE(a.contains(name)) << name;
    EXPECT_FALSE(a.contains("ivrmse.md"));
}

TEST(Report, HandCaseThroughTheTables) {
    std::vector<OutcomeRow> rows{ok_row("2024-01-02", "bs", -3, 0.5), ok_row("2024-01-03", "bs", -1, 0.5),
                                 ok_row("2024-01-04", "bs", 0, 0.5), ok_row("2024-01-05", "bs", 2, 0.5),
                                 ok_row("2024-01-08", "bs", 5, 0.5)};
    auto failed = ok_row("2024-01-09", "bs", 0, 0);
    failed.status = "delta_failed";
    rows.push_back(failed);
    const auto files = build_report(rows);
    // SF {0,0,0,1,3}: at 5% and 10% the ceiling index is 5, so VaR = ES = 3.
    EXPECT_EQ(files.at("tail_report.csv"),
              "asset,period,bucket,target_moneyness,cost_rate,model,n_days,n_failed,var_05,es_05,var_10,es_10,"
              "shortfall_prob,mean_pnl\n"
              "SYN,2024Q1,28,1,0,bs,5,1,3,3,3,3,0.4,0.6\n");
    EXPECT_EQ(files.at("scorecard.md"),
              "| Setting (tau=28d, c=0bp) | Best ES 5% | Best ES 10% | Lowest shortfall prob. | n_days |\n"
              "|---|---|---|---|---|\n"
              "| SYN 2024Q1 ATM | BS (3.000) | BS (3.000) | BS (0.40) | 5 |\n");
    EXPECT_NE(files.at("ecdf.csv").find("SYN,2024Q1,28,1,0,bs,5,1\n"), std::string::npos);
}

TEST(Report, ModelWithOnlyFailedDaysIsCountedNotScored) {
    auto a = ok_row("2024-01-02", "bs", 1.0, 0.0);
    auto b = ok_row("2024-01-02", "rlop", 0.0, 0.0);
    b.status = "incomplete_path";
    const auto files = build_report({a, b});
    EXPECT_NE(files.at("tail_report.csv").find("rlop,0,1,nan,nan,nan,nan,nan,nan\n"), std::string::npos);
    EXPECT_NE(files.at("scorecard.csv").find(",bs,0,bs,0,bs,0,1\n"), std::string::npos);
}

TEST(Report, RejectsBrokenDecomposition) {
    auto r = ok_row("2024-01-02", "bs", 1.0, 0.25);
    r.xi = 1.0;
    EXPECT_THROW(build_report({r}), DataError);
}

TEST(Report, IvrmseTableLayout) {
    std::vector<IvrmseRecord> recs;
    const std::vector<std::pair<std::string, std::vector<double>>> rows{
        {"Whole sample", {7.65, 1.76, 4.21, 10.27, 8.25}},
        {"Moneyness <1", {8.84, 1.61, 4.13, 13.39, 9.53}},
        {"Moneyness >1", {5.46, 1.75, 3.21, 5.46, 6.37}},
        {"Moneyness >1.03", {6.19, 2.02, 3.70, 4.17, 5.59}}};
    const std::vector<std::string> models{"bs", "jd", "heston", "qlbs", "rlop"};
    // Reverse input order; the table orders groups and models itself.
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        for (std::size_t m = models.size(); m-- > 0;) recs.push_back(iv("2020-02-03", "SPY", models[m], it->first, it->second[m]));
    // A second quarter with two days to average.
    recs.push_back(iv("2025-04-01", "SPY", "bs", "Whole sample", 12.0));
    recs.push_back(iv("2025-04-02", "SPY", "bs", "Whole sample", 13.6));
    recs.push_back(iv("2025-04-01", "SPY", "jd", "Whole sample", 9.49));

    const auto files = build_report({ok_row("2024-01-02", "bs", 1.0, 0.0)}, recs);
    EXPECT_EQ(files.at("ivrmse.md"),
              "| Moneyness, tau | Period | Asset | BS | JD | SV | QLBS | RLOP |\n"
              "|---|---|---|---|---|---|---|---|\n"
              "| Whole sample, 28d | 2020Q1 | SPY | 7.65 | **1.76** | 4.21 | 10.27 | 8.25 |\n"
              "|  | 2025Q2 | SPY | 12.80 | **9.49** | - | - | - |\n"
              "| Moneyness <1, 28d | 2020Q1 | SPY | 8.84 | **1.61** | 4.13 | 13.39 | 9.53 |\n"
              "| Moneyness >1, 28d | 2020Q1 | SPY | 5.46 | **1.75** | 3.21 | 5.46 | 6.37 |\n"
              "| Moneyness >1.03, 28d | 2020Q1 | SPY | 6.19 | **2.02** | 3.70 | 4.17 | 5.59 |\n");
    EXPECT_NE(files.at("ivrmse.csv").find("Whole sample,28,2025Q2,SPY,bs,12.8,2,0\n"), std::string::npos);
}

TEST(Report, IvrmseFileRoundTrip) {
    const std::vector<IvrmseRecord> recs{iv("2020-02-03", "SPY", "bs", "Moneyness >1.03", 0.1 + 0.2)};
    std::stringstream ss;
    write_ivrmse(ss, recs);
    const auto back = read_ivrmse(ss);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].value, 0.1 + 0.2);
    EXPECT_EQ(back[0].group, "Moneyness >1.03");
    std::stringstream bad("schema_version,date,asset,model,bucket,group,value,n_used,n_dropped\n1,2020-02-03,SPY,bs,28,g,-1,1,0\n");
    EXPECT_THROW(read_ivrmse(bad), DataError);
}

TEST(Report, ModelLabels) {
    EXPECT_EQ(model_label("heston"), "SV");
    EXPECT_EQ(model_label("rlop"), "RLOP");
    EXPECT_EQ(model_label("custom"), "custom");
}
