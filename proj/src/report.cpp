#include "rlhedge/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "rlhedge/dataio.hpp"
#include "rlhedge/errors.hpp"
#include "rlhedge/riskmetrics.hpp"

namespace rlhedge {

using nlohmann::json;

std::string model_label(std::string_view model) {
    if (model == "bs") return "BS";
    if (model == "jd") return "JD";
    if (model == "heston") return "SV";
    if (model == "qlbs") return "QLBS";
    if (model == "rlop") return "RLOP";
    return std::string(model);
}

// ---------------------------------------------------------------------------
// IVRMSE records

void write_ivrmse(std::ostream& out, const std::vector<IvrmseRecord>& rows) {
    out << "schema_version,date,asset,model,bucket,group,value,n_used,n_dropped\n";
    for (const auto& r : rows)
        out << IvrmseRecord::kSchemaVersion << ',' << format_date(r.date) << ',' << r.asset << ',' << r.model << ','
            << r.bucket << ',' << r.group << ',' << format_double(r.value) << ',' << r.n_used << ',' << r.n_dropped
            << '\n';
}

void write_ivrmse(const std::string& path, const std::vector<IvrmseRecord>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    write_ivrmse(f, rows);
}

std::vector<IvrmseRecord> read_ivrmse(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("ivrmse file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "schema_version,date,asset,model,bucket,group,value,n_used,n_dropped")
        throw DataError("line 1: unexpected ivrmse header");
    std::vector<IvrmseRecord> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) f.push_back(field);
        try {
            if (f.size() != 9) throw DataError("expected 9 fields");
            if (parse_int(f[0]) != IvrmseRecord::kSchemaVersion) throw DataError("unsupported schema_version");
            IvrmseRecord r;
            r.date = parse_date(f[1]);
            r.asset = f[2];
            r.model = f[3];
            r.bucket = parse_int(f[4]);
            r.group = f[5];
            r.value = parse_double(f[6]);
            r.n_used = parse_int(f[7]);
            r.n_dropped = parse_int(f[8]);
            if (!(r.value >= 0.0)) throw DataError("ivrmse must be >= 0");
            rows.push_back(std::move(r));
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

std::vector<IvrmseRecord> read_ivrmse(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    try {
        return read_ivrmse(f);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int model_rank(const std::string& m) {
    static const std::vector<std::string> order{"bs", "jd", "heston", "qlbs", "rlop"};
    const auto it = std::find(order.begin(), order.end(), m);
    return static_cast<int>(it - order.begin());
}

bool model_less(const std::string& a, const std::string& b) {
    return std::make_tuple(model_rank(a), a) < std::make_tuple(model_rank(b), b);
}

struct SettingKey {
    std::string asset;
    std::string period;
    int bucket;
    double target;
    double cost_rate;

    auto tie() const { return std::tie(asset, period, bucket, target, cost_rate); }
    bool operator<(const SettingKey& o) const { return tie() < o.tie(); }
};

std::string target_label(double target) { return target == 1.0 ? "ATM" : "K/F=" + format_double(target); }

std::string cost_label(double c) { return fmt::format("{:.6g}bp", c * 1e4); }

std::string setting_label(const SettingKey& k) {
    return fmt::format("{} {} {} {}d c={}", k.asset, k.period, target_label(k.target), k.bucket,
                       cost_label(k.cost_rate));
}

std::string key_columns(const SettingKey& k) {
    return fmt::format("{},{},{},{},{}", k.asset, k.period, k.bucket, format_double(k.target),
                       format_double(k.cost_rate));
}

struct ModelStats {
    int n_failed = 0;
    std::vector<double> pnl, tc, xi;
};

json ci_json(const MeanCi& m) { return {{"value", m.value}, {"lo", m.lo}, {"hi", m.hi}}; }

std::string joined_labels(const std::string& names) {
    std::string out;
    std::istringstream ss(names);
    std::string m;
    while (std::getline(ss, m, '/')) out += (out.empty() ? "" : "/") + model_label(m);
    return out;
}

}  // namespace

ReportFiles build_report(const std::vector<OutcomeRow>& outcomes, const std::vector<IvrmseRecord>& ivrmse) {
    std::map<SettingKey, std::map<std::string, ModelStats, decltype(&model_less)>> groups;
    int n_ok = 0;
    for (const auto& r : outcomes) {
        const SettingKey key{r.asset, quarter_label(r.date), r.bucket, r.target_moneyness, r.cost_rate};
        auto [it, _] = groups.try_emplace(key, &model_less);
        auto& s = it->second[r.model];
        if (r.status != "ok") {
            ++s.n_failed;
            continue;
        }
        if (r.xi != r.pnl_net + r.tc_total) throw DataError("report: xi != pnl_net + tc_total");
        s.pnl.push_back(r.pnl_net);
        s.tc.push_back(r.tc_total);
        s.xi.push_back(r.xi);
        ++n_ok;
    }

    std::string tail_csv =
        "asset,period,bucket,target_moneyness,cost_rate,model,n_days,n_failed,var_05,es_05,var_10,es_10,"
        "shortfall_prob,mean_pnl\n";
    std::string risk_csv =
        "asset,period,bucket,target_moneyness,cost_rate,model,n_days,mean_tc,mean_tc_lo,mean_tc_hi,rmse_xi,"
        "rmse_xi_lo,rmse_xi_hi\n";
    std::string ecdf_csv = "asset,period,bucket,target_moneyness,cost_rate,model,pnl_net,cum_prob\n";
    std::string score_csv =
        "asset,period,bucket,target_moneyness,cost_rate,best_es_05,es_05,best_es_10,es_10,best_shortfall,"
        "shortfall_prob,n_days\n";
    std::map<std::pair<int, double>, std::string> score_md;  // (bucket, cost) -> table rows
    json settings = json::array();

    for (const auto& [key, models] : groups) {
        json jmodels = json::array();
        std::vector<ScoreInput> score_in;
        const auto label = setting_label(key);
        for (const auto& [model, s] : models) {
            const int n = static_cast<int>(s.pnl.size());
            json jm{{"model", model}, {"n_days", n}, {"n_failed", s.n_failed}};
            if (n == 0) {
                tail_csv += fmt::format("{},{},0,{},{},{},{},{},{},{}\n", key_columns(key), model, s.n_failed,
                                        kNaN, kNaN, kNaN, kNaN, kNaN, kNaN);
                jmodels.push_back(jm);
                continue;
            }
            const auto t = tail_report(s.pnl);
            const auto rc = risk_cost_point(s.tc, s.xi);
            const double mean_pnl = mean_ci(s.pnl).value;
            tail_csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", key_columns(key), model, n, s.n_failed,
                                    format_double(t.tail_05.var), format_double(t.tail_05.es),
                                    format_double(t.tail_10.var), format_double(t.tail_10.es),
                                    format_double(t.shortfall_prob), format_double(mean_pnl));
            risk_csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", key_columns(key), model, n,
                                    format_double(rc.mean_tc.value), format_double(rc.mean_tc.lo),
                                    format_double(rc.mean_tc.hi), format_double(rc.rmse_xi.value),
                                    format_double(rc.rmse_xi.lo), format_double(rc.rmse_xi.hi));
            for (const auto& [v, p] : t.ecdf)
                ecdf_csv += fmt::format("{},{},{},{}\n", key_columns(key), model, format_double(v), format_double(p));
            jm["var_05"] = t.tail_05.var;
            jm["es_05"] = t.tail_05.es;
            jm["var_10"] = t.tail_10.var;
            jm["es_10"] = t.tail_10.es;
            jm["shortfall_prob"] = t.shortfall_prob;
            jm["mean_pnl"] = mean_pnl;
            jm["mean_tc"] = ci_json(rc.mean_tc);
            jm["rmse_xi"] = ci_json(rc.rmse_xi);
            jmodels.push_back(jm);
            score_in.push_back({label, model, t.tail_05.es, t.tail_10.es, t.shortfall_prob, n});
        }
        json js{{"label", label},
                {"asset", key.asset},
                {"period", key.period},
                {"bucket", key.bucket},
                {"target_moneyness", key.target},
                {"cost_rate", key.cost_rate},
                {"models", jmodels}};
        if (!score_in.empty()) {
            const auto row = scorecard(score_in).front();
            score_csv += fmt::format("{},{},{},{},{},{},{},{}\n", key_columns(key), row.best_es_05,
                                     format_double(row.es_05), row.best_es_10, format_double(row.es_10),
                                     row.best_shortfall, format_double(row.shortfall_prob), row.n_days);
            score_md[{key.bucket, key.cost_rate}] += fmt::format(
                "| {} {} {} | {} ({:.3f}) | {} ({:.3f}) | {} ({:.2f}) | {} |\n", key.asset, key.period,
                target_label(key.target), joined_labels(row.best_es_05), row.es_05, joined_labels(row.best_es_10),
                row.es_10, joined_labels(row.best_shortfall), row.shortfall_prob, row.n_days);
            js["scorecard"] = {{"best_es_05", row.best_es_05}, {"es_05", row.es_05},
                               {"best_es_10", row.best_es_10}, {"es_10", row.es_10},
                               {"best_shortfall", row.best_shortfall}, {"shortfall_prob", row.shortfall_prob},
                               {"n_days", row.n_days}};
        }
        settings.push_back(js);
    }

    std::string score_markdown;
    for (const auto& [bc, rows] : score_md) {
        if (!score_markdown.empty()) score_markdown += '\n';
        score_markdown += fmt::format(
            "| Setting (tau={}d, c={}) | Best ES 5% | Best ES 10% | Lowest shortfall prob. | n_days |\n"
            "|---|---|---|---|---|\n",
            bc.first, cost_label(bc.second));
        score_markdown += rows;
    }

    json summary{{"schema_version", 1},
                 {"n_rows", static_cast<int>(outcomes.size())},
                 {"n_ok", n_ok},
                 {"settings", settings}};

    ReportFiles files;
    files["tail_report.csv"] = tail_csv;
    files["risk_cost.csv"] = risk_csv;
    files["ecdf.csv"] = ecdf_csv;
    files["scorecard.csv"] = score_csv;
    files["scorecard.md"] = score_markdown;

    if (!ivrmse.empty()) {
        // (group order, bucket, period, asset) -> model -> per-day values
        struct Cell {
            std::vector<double> values;
            int n_dropped = 0;
        };
        std::vector<std::string> group_order;
        for (const auto& g : ivrmse_groups()) group_order.push_back(g.label);
        const auto group_rank = [&](const std::string& g) {
            const auto it = std::find(group_order.begin(), group_order.end(), g);
            return static_cast<int>(it - group_order.begin());
        };
        using RowKey = std::tuple<int, std::string, int, std::string, std::string>;
        std::map<RowKey, std::map<std::string, Cell, decltype(&model_less)>> table;
        std::vector<std::string> models;
        for (const auto& r : ivrmse) {
            const RowKey k{group_rank(r.group), r.group, r.bucket, quarter_label(r.date), r.asset};
            auto [it, _] = table.try_emplace(k, &model_less);
            auto& cell = it->second[r.model];
            cell.values.push_back(r.value);
            cell.n_dropped += r.n_dropped;
            if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        }
        std::sort(models.begin(), models.end(), model_less);

        std::string csv = "group,bucket,period,asset,model,value,n_days,n_dropped\n";
        std::string md = "| Moneyness, tau | Period | Asset |";
        std::string rule = "|---|---|---|";
        for (const auto& m : models) {
            md += " " + model_label(m) + " |";
            rule += "---|";
        }
        md += "\n" + rule + "\n";
        json jrows = json::array();
        std::string prev_group;
        std::string prev_period;
        for (const auto& [k, cells] : table) {
            const auto& [rank, group, bucket, period, asset] = k;
            double best = std::numeric_limits<double>::infinity();
            std::map<std::string, double> means;
            json jcells = json::object();
            for (const auto& [m, cell] : cells) {
                const double v = equal_day_mean(cell.values);
                means[m] = v;
                best = std::min(best, v);
                csv += fmt::format("{},{},{},{},{},{},{},{}\n", group, bucket, period, asset, m, format_double(v),
                                   cell.values.size(), cell.n_dropped);
                jcells[m] = {{"value", v},
                             {"n_days", static_cast<int>(cell.values.size())},
                             {"n_dropped", cell.n_dropped}};
            }
            const auto head = fmt::format("{}, {}d", group, bucket);
            const bool same_group = head == prev_group;
            md += fmt::format("| {} | {} | {} |", same_group ? "" : head, same_group && period == prev_period ? "" : period,
                              asset);
            prev_group = head;
            prev_period = period;
            for (const auto& m : models) {
                const auto it = means.find(m);
                if (it == means.end()) {
                    md += " - |";
                } else if (it->second == best) {
                    md += fmt::format(" **{:.2f}** |", it->second);
                } else {
                    md += fmt::format(" {:.2f} |", it->second);
                }
            }
            md += '\n';
            jrows.push_back(
                {{"group", group}, {"bucket", bucket}, {"period", period}, {"asset", asset}, {"models", jcells}});
        }
        files["ivrmse.csv"] = csv;
        files["ivrmse.md"] = md;
        summary["ivrmse"] = jrows;
    }
    files["summary.json"] = summary.dump(2) + "\n";
    return files;
}

std::vector<std::string> write_report(const ReportFiles& files, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (const auto& [name, contents] : files) {
        const auto path = (std::filesystem::path(dir) / name).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write " + path);
        f << contents;
        paths.push_back(path);
    }
    return paths;
}

}  // namespace rlhedge
