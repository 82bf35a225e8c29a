#include "rlhedge/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "rlhedge/errors.hpp"
#include "rlhedge/qlbs_env.hpp"
#include "rlhedge/riskmetrics.hpp"
#include "rlhedge/rlop_env.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_policy(const std::string& m) { return m == "qlbs" || m == "rlop"; }

const std::vector<std::string>& all_param_names() {
    static const std::vector<std::string> names{"sigma", "jump_intensity", "jump_mean_log", "jump_std_log", "v0",
                                                "kappa", "theta",          "xi",            "rho"};
    return names;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<CalibrationRecord> calibrate_slices(const std::vector<OptionSlice>& slices,
                                                const std::vector<std::string>& models,
                                                const std::vector<int>& bucket_centers,
                                                const std::vector<MaturityBucket>& bucket_defs,
                                                const CalibrationOptions& opt) {
    std::vector<CalibrationRecord> out;
    for (const auto& day : slices) {
        for (int bucket : bucket_centers) {
            const auto cross = bucket_slice(day, bucket, bucket_defs);
            if (cross.quotes.empty()) continue;
            for (const auto& m : models) {
                if (is_policy(m)) continue;
                CalibrationRecord rec;
                rec.date = day.date;
                rec.bucket = bucket;
                rec.model = m;
                rec.n_quotes = static_cast<int>(cross.quotes.size());
                try {
                    const auto fit = calibrate(cross, model_kind_from_string(m), opt);
                    rec.params = fit.model;
                    rec.objective = fit.objective;
                } catch (const ParameterError&) {
                    throw;
                } catch (const Error&) {
                    rec.status = "calibration_failed";
                }
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

void write_calibration(const std::string& path, const std::vector<CalibrationRecord>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "schema_version,date,bucket,model,status,objective,n_quotes";
    for (const auto& n : all_param_names()) f << ',' << n;
    f << '\n';
    for (const auto& r : rows) {
        f << 1 << ',' << format_date(r.date) << ',' << r.bucket << ',' << r.model << ',' << r.status << ','
          << format_double(r.objective) << ',' << r.n_quotes;
        json p = r.params ? model_params_json(*r.params) : json::object();
        for (const auto& n : all_param_names()) {
            f << ',';
            if (p.contains(n)) f << format_double(p[n].get<double>());
        }
        f << '\n';
    }
}

std::vector<CalibrationRecord> read_calibration(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::string line;
    std::getline(f, line);
    const std::size_t width = 7 + all_param_names().size();
    std::vector<CalibrationRecord> rows;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> v;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) v.push_back(field);
        if (!line.empty() && line.back() == ',') v.emplace_back();
        try {
            if (v.size() != width) throw DataError("expected " + std::to_string(width) + " fields");
            CalibrationRecord r;
            r.date = parse_date(v[1]);
            r.bucket = parse_int(v[2]);
            r.model = v[3];
            r.status = v[4];
            r.objective = parse_double(v[5]);
            r.n_quotes = parse_int(v[6]);
            if (r.status == "ok") {
                json p{{"kind", r.model}};
                for (const auto& n : model_param_names(model_kind_from_string(r.model))) {
                    const auto idx = static_cast<std::size_t>(
                        std::find(all_param_names().begin(), all_param_names().end(), n) - all_param_names().begin());
                    p[n] = parse_double(v[7 + idx]);
                }
                r.params = model_params_from_json(p);
            }
            rows.push_back(std::move(r));
        } catch (const Error& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

std::function<std::optional<ModelParams>(const Date&, int, const std::string&)> fitted_lookup(
    const std::vector<CalibrationRecord>& rows) {
    std::map<std::tuple<Date, int, std::string>, std::optional<ModelParams>> table;
    for (const auto& r : rows) table[{r.date, r.bucket, r.model}] = r.params;
    return [table = std::move(table)](const Date& d, int bucket, const std::string& model) {
        const auto it = table.find({d, bucket, model});
        return it == table.end() ? std::nullopt : it->second;
    };
}

// ---------------------------------------------------------------------------

std::vector<double> policy_quote_prices(const PolicyCheckpoint& ckpt, const OptionSlice& slice, int eval_paths,
                                        std::uint64_t seed) {
    std::vector<double> prices;
    prices.reserve(slice.quotes.size());
    for (const auto& q : slice.quotes) {
        const double tau = q.contract.tau_years;
        const double rate = -std::log(q.forward_quote.discount) / tau;
        const auto rescale = [&](GbmParams g, double train_strike) {
            // Spot whose forward at the quote's rate matches F, in training-strike units.
            g.s0 = train_strike * q.forward_quote.forward * q.forward_quote.discount / q.contract.strike;
            g.mu = rate;
            g.r = rate;
            g.dt = tau / g.horizon_steps;
            return g;
        };
        double unit_price = 0.0;
        double train_strike = 1.0;
        if (ckpt.method == "qlbs") {
            auto cfg = qlbs_config_from_json(ckpt.env);
            train_strike = cfg.contract.strike;
            cfg.gbm = rescale(cfg.gbm, train_strike);
            cfg.contract = horizon_contract(cfg.gbm, train_strike);
            unit_price = qlbs_price(cfg, ckpt, eval_paths, seed).price;
        } else if (ckpt.method == "rlop") {
            auto cfg = rlop_config_from_json(ckpt.env);
            train_strike = cfg.strike;
            cfg.gbm = rescale(cfg.gbm, train_strike);
            RlopEnv env(cfg);
            unit_price = evaluate(env, ckpt, eval_paths, seed).price;
        } else {
            throw ParameterError("policy_quote_prices: unknown method " + ckpt.method);
        }
        prices.push_back(unit_price * q.contract.strike / train_strike);
    }
    return prices;
}

std::vector<IvrmseRecord> ivrmse_records(const std::vector<OptionSlice>& slices, const std::string& asset,
                                         const std::vector<CalibrationRecord>& fits,
                                         const std::map<std::string, PolicyCheckpoint>& policies,
                                         const std::vector<int>& bucket_centers,
                                         const std::vector<MaturityBucket>& bucket_defs, int pricing_paths,
                                         std::uint64_t seed) {
    std::map<std::pair<Date, int>, std::vector<const CalibrationRecord*>> by_day;
    for (const auto& f : fits)
        if (f.params) by_day[{f.date, f.bucket}].push_back(&f);
    const auto groups = ivrmse_groups();
    std::vector<IvrmseRecord> out;
    for (const auto& day : slices) {
        for (int bucket : bucket_centers) {
            const auto cross = bucket_slice(day, bucket, bucket_defs);
            if (cross.quotes.empty()) continue;
            std::vector<std::pair<std::string, std::vector<double>>> priced;
            for (const auto* f : by_day[{day.date, bucket}]) priced.emplace_back(f->model, slice_model_prices(cross, *f->params));
            for (const auto& [name, ckpt] : policies)
                priced.emplace_back(name, policy_quote_prices(ckpt, cross, pricing_paths, seed));
            for (const auto& [model, prices] : priced) {
                for (const auto& g : groups) {
                    try {
                        const auto r = ivrmse_day(cross, prices, g.keep);
                        out.push_back({day.date, asset, model, bucket, g.label, r.value, r.n_used, r.n_dropped});
                    } catch (const InsufficientDataError&) {
                        // group empty on this day
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

TrainReport train_method(const RunConfig& cfg, const std::string& method, const std::string& log_path) {
    TrainConfig t = cfg.train;
    t.seed = derive_seed(cfg.seed, "train/" + method);
    t.log_path = log_path;
    if (method == "qlbs") {
        QlbsEnv env(cfg.qlbs);
        return train(env, t);
    }
    if (method == "rlop") {
        RlopEnv env(cfg.rlop);
        return train(env, t);
    }
    throw ParameterError("train_method: method must be qlbs or rlop");
}

BacktestConfig backtest_config(const RunConfig& cfg, double cost_rate) {
    BacktestConfig b;
    b.asset = cfg.asset;
    b.buckets = cfg.bucket_centers;
    b.targets = cfg.targets;
    b.cost_rate = cost_rate;
    b.bucket_defs = cfg.buckets;
    b.calibration = cfg.calibration;
    return b;
}

std::vector<std::string> write_training(const std::string& dir, const std::string& method, const TrainReport& report) {
    const auto at = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
    save_checkpoint(report.checkpoint, at(method + "_checkpoint.json"));
    const json summary{{"schema_version", 1},
                       {"method", method},
                       {"price", report.final_price.price},
                       {"price_se", report.final_price.se},
                       {"stop_reason", report.stop_reason},
                       {"batches", static_cast<int>(report.batches.size())},
                       {"skipped_batches", report.skipped_batches},
                       {"max_invariant_error", report.max_invariant_error}};
    std::ofstream(at(method + "_train_summary.json"), std::ios::binary) << summary.dump(2) << '\n';
    std::vector<std::string> out;
    for (const auto& suffix : {"_train.jsonl", "_checkpoint.json", "_train_summary.json"})
        if (fs::exists(at(method + suffix))) out.push_back(at(method + suffix));
    return out;
}

PipelineResult run_pipeline(const RunConfig& cfg, const std::string& out_dir, const std::vector<std::string>& argv) {
    fs::create_directories(out_dir);
    const auto at = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
    PipelineResult res;

    SyntheticSpec spec = cfg.synthetic;
    spec.seed = derive_seed(cfg.seed, "synthetic");
    const auto data = generate_synthetic(spec);
    write_slices(at("slices.csv"), data.slices);
    {
        std::ofstream f(at("truth.json"), std::ios::binary);
        f << data.truth.dump(2) << '\n';
    }
    res.outputs.push_back(at("slices.csv"));
    res.outputs.push_back(at("truth.json"));

    IngestOptions ingest_opt;
    ingest_opt.min_days = spec.min_days;
    ingest_opt.max_days = spec.max_days;
    const auto slices = ingest(at("slices.csv"), ingest_opt).slices;

    res.fits = calibrate_slices(slices, cfg.models, cfg.bucket_centers, cfg.buckets, cfg.calibration);
    write_calibration(at("calibration.csv"), res.fits);
    res.outputs.push_back(at("calibration.csv"));

    for (const std::string method : {"qlbs", "rlop"}) {
        if (std::find(cfg.models.begin(), cfg.models.end(), method) == cfg.models.end()) continue;
        auto report = train_method(cfg, method, at(method + "_train.jsonl"));
        for (const auto& p : write_training(out_dir, method, report)) res.outputs.push_back(p);
        res.policies[method] = report.checkpoint;
        res.training[method] = std::move(report);
    }

    res.ivrmse = ivrmse_records(slices, cfg.asset, res.fits, res.policies, cfg.bucket_centers, cfg.buckets,
                                cfg.pricing_paths, derive_seed(cfg.seed, "ivrmse"));
    write_ivrmse(at("ivrmse_days.csv"), res.ivrmse);
    res.outputs.push_back(at("ivrmse_days.csv"));

    const auto lookup = fitted_lookup(res.fits);
    for (double c : cfg.cost_rates) {
        auto bt = backtest_config(cfg, c);
        bt.fitted = lookup;
        const auto rows = backtest_slices(slices, cfg.models, res.policies, bt);
        res.outcomes.insert(res.outcomes.end(), rows.begin(), rows.end());
    }
    write_outcomes(at("outcomes.csv"), res.outcomes);
    res.outputs.push_back(at("outcomes.csv"));

    // The report reads the written files back, as the report command does.
    res.report = build_report(read_outcomes(at("outcomes.csv")), read_ivrmse(at("ivrmse_days.csv")));
    for (const auto& p : write_report(res.report, at("report"))) res.outputs.push_back(p);

    write_manifest(out_dir, "pipeline", argv, to_json(cfg), res.outputs);
    res.outputs.push_back(at("pipeline.manifest.json"));
    return res;
}

}  // namespace rlhedge
