// rlhedge command-line driver.
//
// Exit codes: 0 success, 1 usage or parameter error, 2 data error,
// 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "rlhedge/errors.hpp"
#include "rlhedge/pipeline.hpp"
#include "rlhedge/rng.hpp"

namespace fs = std::filesystem;
using namespace rlhedge;

namespace {

RunConfig config_or_defaults(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::string parent_dir(const std::string& file) {
    const auto p = fs::path(file).parent_path();
    return p.empty() ? std::string(".") : p.string();
}

void ensure_parent(const std::string& file) { fs::create_directories(parent_dir(file)); }

// "qlbs=path/to/checkpoint.json" pairs.
std::map<std::string, PolicyCheckpoint> load_policies(const std::vector<std::string>& specs) {
    std::map<std::string, PolicyCheckpoint> out;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
            throw ParameterError("--policy expects METHOD=FILE, got '" + s + "'");
        out[s.substr(0, eq)] = load_checkpoint(s.substr(eq + 1));
    }
    return out;
}

void require_policies(const std::vector<std::string>& models, const std::map<std::string, PolicyCheckpoint>& policies) {
    for (const auto& m : models)
        if ((m == "qlbs" || m == "rlop") && !policies.contains(m))
            throw ParameterError(fmt::format("model {} needs --policy {}=FILE", m, m));
}

IngestOptions ingest_options(const RunConfig& cfg) {
    IngestOptions o;
    o.min_days = cfg.synthetic.min_days;
    o.max_days = cfg.synthetic.max_days;
    return o;
}

struct Args {
    std::string config;
    std::string out;
    std::string slices;
    std::string method;
    std::string outcomes;
    std::string ivrmse;
    std::string calibration;
    std::vector<std::string> models;
    std::vector<std::string> policies;
    int n_paths = 100;
    bool json = false;
};

int run_simulate(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    if (a.n_paths < 1) throw ParameterError("--paths must be at least 1");
    const auto paths = simulate_paths(cfg.gbm, derive_seed(cfg.seed, "simulate"), a.n_paths);
    ensure_parent(a.out);
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw DataError("cannot write " + a.out);
    f << "schema_version,path,step,price\n";
    for (Eigen::Index p = 0; p < paths.rows(); ++p)
        for (Eigen::Index t = 0; t < paths.cols(); ++t)
            f << fmt::format("1,{},{},{}\n", p, t, format_double(paths(p, t)));
    f.close();
    write_manifest(parent_dir(a.out), "simulate", argv, to_json(cfg), {a.out});
    return 0;
}

int run_generate(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = derive_seed(cfg.seed, "synthetic");
    const auto data = generate_synthetic(spec);
    fs::create_directories(a.out);
    const auto slices = (fs::path(a.out) / "slices.csv").string();
    const auto truth = (fs::path(a.out) / "truth.json").string();
    write_slices(slices, data.slices);
    std::ofstream(truth, std::ios::binary) << data.truth.dump(2) << '\n';
    write_manifest(a.out, "generate", argv, to_json(cfg), {slices, truth});
    return 0;
}

int run_train(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    fs::create_directories(a.out);
    const auto report = train_method(cfg, a.method, (fs::path(a.out) / (a.method + "_train.jsonl")).string());
    const auto outputs = write_training(a.out, a.method, report);
    write_manifest(a.out, "train", argv, to_json(cfg), outputs);
    std::cout << fmt::format("{} price {:.6f} (se {:.6f}), {} batches, {}\n", a.method, report.final_price.price,
                             report.final_price.se, report.batches.size(), report.stop_reason);
    return 0;
}

int run_calibrate(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    const auto slices = ingest(a.slices, ingest_options(cfg)).slices;
    const auto fits = calibrate_slices(slices, a.models, cfg.bucket_centers, cfg.buckets, cfg.calibration);
    ensure_parent(a.out);
    write_calibration(a.out, fits);
    write_manifest(parent_dir(a.out), "calibrate", argv, to_json(cfg), {a.out});
    int failed = 0;
    for (const auto& r : fits) failed += r.status != "ok";
    std::cout << fmt::format("{} fits, {} failed\n", fits.size(), failed);
    return 0;
}

int run_backtest(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    const auto policies = load_policies(a.policies);
    require_policies(a.models, policies);
    const auto slices = ingest(a.slices, ingest_options(cfg)).slices;
    std::vector<OutcomeRow> rows;
    for (double c : cfg.cost_rates) {
        auto bt = backtest_config(cfg, c);
        if (!a.calibration.empty()) bt.fitted = fitted_lookup(read_calibration(a.calibration));
        const auto r = backtest_slices(slices, a.models, policies, bt);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    ensure_parent(a.out);
    write_outcomes(a.out, rows);
    write_manifest(parent_dir(a.out), "backtest", argv, to_json(cfg), {a.out});
    return 0;
}

int run_ivrmse(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    const auto slices = ingest(a.slices, ingest_options(cfg)).slices;
    const auto recs = ivrmse_records(slices, cfg.asset, read_calibration(a.calibration), load_policies(a.policies),
                                     cfg.bucket_centers, cfg.buckets, cfg.pricing_paths,
                                     derive_seed(cfg.seed, "ivrmse"));
    ensure_parent(a.out);
    write_ivrmse(a.out, recs);
    write_manifest(parent_dir(a.out), "ivrmse", argv, to_json(cfg), {a.out});
    return 0;
}

int run_report(const Args& a, const std::vector<std::string>& argv) {
    const auto outcomes = read_outcomes(a.outcomes);
    const auto iv = a.ivrmse.empty() ? std::vector<IvrmseRecord>{} : read_ivrmse(a.ivrmse);
    const auto written = write_report(build_report(outcomes, iv), a.out);
    nlohmann::json inputs{{"outcomes", a.outcomes}, {"outcomes_fnv1a64", file_digest(a.outcomes)}};
    if (!a.ivrmse.empty()) {
        inputs["ivrmse"] = a.ivrmse;
        inputs["ivrmse_fnv1a64"] = file_digest(a.ivrmse);
    }
    write_manifest(a.out, "report", argv, inputs, written);
    return 0;
}

int run_pipeline_cmd(const Args& a, const std::vector<std::string>& argv) {
    const auto cfg = config_or_defaults(a.config);
    const auto res = run_pipeline(cfg, a.out.empty() ? cfg.output_dir : a.out, argv);
    for (const auto& [m, t] : res.training)
        std::cout << fmt::format("{} price {:.6f} (se {:.6f})\n", m, t.final_price.price, t.final_price.se);
    std::cout << fmt::format("{} outcome rows, {} files\n", res.outcomes.size(), res.outputs.size());
    return 0;
}

int run_config_reference_cmd(const Args& a) {
    const std::string text = a.json ? run_config_defaults().dump(2) + "\n" : run_config_reference();
    if (a.out.empty()) {
        std::cout << text;
        return 0;
    }
    ensure_parent(a.out);
    std::ofstream(a.out, std::ios::binary) << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    args[0] = fs::path(args[0]).filename().string();  // manifests stay install-location independent
    CLI::App app{"Option pricing and hedging with reinforcement learning"};
    app.require_subcommand(1);
    Args a;

    const std::vector<std::string> parametric{"bs", "jd", "heston"};
    const std::vector<std::string> all_models{"bs", "jd", "heston", "qlbs", "rlop"};

    auto* sim = app.add_subcommand("simulate", "Simulate GBM paths from the config's gbm section");
    sim->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    sim->add_option("--paths", a.n_paths, "Number of paths")->capture_default_str();
    sim->add_option("--out", a.out, "Output CSV")->required();

    auto* gen = app.add_subcommand("generate", "Write a synthetic option-chain slice file and its truth sidecar");
    gen->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    gen->add_option("--out", a.out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train a QLBS or RLOP policy");
    train->add_option("--method", a.method, "qlbs or rlop")->required()->check(CLI::IsMember({"qlbs", "rlop"}));
    train->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    train->add_option("--out", a.out, "Output directory")->required();

    auto* cal = app.add_subcommand("calibrate", "Fit pricing models to each day's bucket cross-section");
    cal->add_option("--model", a.models, "Models, comma separated")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember(parametric));
    cal->add_option("--slices", a.slices, "Slice CSV")->required()->check(CLI::ExistingFile);
    cal->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    cal->add_option("--out", a.out, "Output calibration CSV")->required();

    auto* bt = app.add_subcommand("backtest", "Hedge each day's target contracts along the realized path");
    bt->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    bt->add_option("--slices", a.slices, "Slice CSV")->required()->check(CLI::ExistingFile);
    bt->add_option("--models", a.models, "Models, comma separated")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember(all_models));
    bt->add_option("--policy", a.policies, "METHOD=checkpoint.json, repeatable");
    bt->add_option("--calibration", a.calibration, "Reuse fits from a calibration CSV")->check(CLI::ExistingFile);
    bt->add_option("--out", a.out, "Output outcome CSV")->required();

    auto* iv = app.add_subcommand("ivrmse", "Implied-volatility fit per day, model and moneyness group");
    iv->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    iv->add_option("--slices", a.slices, "Slice CSV")->required()->check(CLI::ExistingFile);
    iv->add_option("--calibration", a.calibration, "Calibration CSV")->required()->check(CLI::ExistingFile);
    iv->add_option("--policy", a.policies, "METHOD=checkpoint.json, repeatable");
    iv->add_option("--out", a.out, "Output CSV")->required();

    auto* rep = app.add_subcommand("report", "Tail, risk-cost, ECDF and scorecard tables from an outcome file");
    rep->add_option("--outcomes", a.outcomes, "Outcome CSV")->required()->check(CLI::ExistingFile);
    rep->add_option("--ivrmse", a.ivrmse, "Per-day IVRMSE CSV")->check(CLI::ExistingFile);
    rep->add_option("--out", a.out, "Output directory")->required();

    auto* pipe = app.add_subcommand("pipeline", "generate, calibrate, train, backtest and report in one run");
    pipe->add_option("--config", a.config, "Run config (JSON)")->check(CLI::ExistingFile);
    pipe->add_option("--out", a.out, "Output directory (default: output_dir from the config)");

    auto* ref = app.add_subcommand("config-reference", "Print every config key with its default");
    ref->add_flag("--json", a.json, "Print the defaults as JSON instead");
    ref->add_option("--out", a.out, "Write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    try {
        if (sim->parsed()) return run_simulate(a, args);
        if (gen->parsed()) return run_generate(a, args);
        if (train->parsed()) return run_train(a, args);
        if (cal->parsed()) return run_calibrate(a, args);
        if (bt->parsed()) return run_backtest(a, args);
        if (iv->parsed()) return run_ivrmse(a, args);
        if (rep->parsed()) return run_report(a, args);
        if (pipe->parsed()) return run_pipeline_cmd(a, args);
        if (ref->parsed()) return run_config_reference_cmd(a);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const IndexError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
