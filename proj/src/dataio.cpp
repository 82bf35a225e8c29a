#include "rlhedge/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Core>
#include <fmt/format.h>

#include "gbm_json.hpp"
#include "rlhedge/errors.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

using nlohmann::json;
namespace chr = std::chrono;

// ---------------------------------------------------------------------------
// Scalars and dates

Date parse_date(std::string_view s) {
    const auto digits = [&](std::size_t from, std::size_t n) {
        int v = 0;
        for (std::size_t i = from; i < from + n; ++i) {
            if (s[i] < '0' || s[i] > '9') throw DataError("bad date '" + std::string(s) + "'");
            v = 10 * v + (s[i] - '0');
        }
        return v;
    };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw DataError("bad date '" + std::string(s) + "'");
    const Date d{chr::year{digits(0, 4)}, chr::month{static_cast<unsigned>(digits(5, 2))},
                 chr::day{static_cast<unsigned>(digits(8, 2))}};
    if (!d.ok()) throw DataError("bad date '" + std::string(s) + "'");
    return d;
}

std::string format_date(const Date& d) {
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                       static_cast<unsigned>(d.day()));
}

std::string quarter_label(const Date& d) {
    return fmt::format("{}Q{}", static_cast<int>(d.year()), (static_cast<unsigned>(d.month()) - 1) / 3 + 1);
}

std::string format_double(double x) { return fmt::format("{}", x); }

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != end) throw DataError("bad number '" + std::string(s) + "'");
    return v;
}

int parse_int(std::string_view s) {
    int v = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != end) throw DataError("bad integer '" + std::string(s) + "'");
    return v;
}

namespace {

int days_between(const Date& from, const Date& to) {
    return static_cast<int>((chr::sys_days(to) - chr::sys_days(from)).count());
}

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    return f;
}

// Header name -> column index, with required names checked.
std::map<std::string, std::size_t> header_index(const std::string& line, const std::vector<std::string>& required) {
    auto cols = split_csv_line(line);
    if (!cols.empty() && cols[0].rfind("\xEF\xBB\xBF", 0) == 0) cols[0].erase(0, 3);  // UTF-8 BOM
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < cols.size(); ++i) idx[cols[i]] = i;
    for (const auto& r : required)
        if (!idx.contains(r)) throw DataError("line 1: missing column '" + r + "'");
    return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model parameters

std::vector<std::string> model_param_names(ModelKind kind) {
    switch (kind) {
        case ModelKind::BS: return {"sigma"};
        case ModelKind::JD: return {"sigma", "jump_intensity", "jump_mean_log", "jump_std_log"};
        case ModelKind::Heston: return {"v0", "kappa", "theta", "xi", "rho"};
    }
    throw ParameterError("unknown model kind");
}

json model_params_json(const ModelParams& m) {
    const auto kind = kind_of(m);
    const auto names = model_param_names(kind);
    const Eigen::VectorXd x = to_vector(m);
    json j{{"kind", std::string(to_string(kind))}};
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = x(static_cast<Eigen::Index>(i));
    return j;
}

ModelParams model_params_from_json(const json& j) {
    try {
        const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
        const auto names = model_param_names(kind);
        for (const auto& [key, _] : j.items())
            if (key != "kind" && std::find(names.begin(), names.end(), key) == names.end())
                throw DataError("model params: unknown field '" + key + "'");
        Eigen::VectorXd x(static_cast<Eigen::Index>(names.size()));
        for (std::size_t i = 0; i < names.size(); ++i) x(static_cast<Eigen::Index>(i)) = j.at(names[i]).get<double>();
        auto m = from_vector(kind, x);
        validate(m);
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model params: ") + e.what());
    } catch (const ParameterError& e) {
        throw DataError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Slice files

IngestResult ingest(std::istream& in, const IngestOptions& opt) {
    static const std::vector<std::string> kColumns{"date",     "expiry_date", "strike",          "mid_price",
                                                   "forward", "discount",    "underlying_close"};
    std::string line;
    if (!std::getline(in, line) || line.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError("slice file is empty");
    const auto idx = header_index(line, kColumns);
    const std::size_t width = idx.size();

    IngestResult res;
    std::map<Date, OptionSlice> by_date;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = split_csv_line(line);
        const auto where = "line " + std::to_string(line_no) + ": ";
        if (f.size() != width) throw DataError(where + "expected " + std::to_string(width) + " fields");
        try {
            if (idx.contains("schema_version") && parse_int(f[idx.at("schema_version")]) != kSliceSchemaVersion)
                throw DataError("unsupported schema_version");
            const Date date = parse_date(f[idx.at("date")]);
            const Date expiry = parse_date(f[idx.at("expiry_date")]);
            const double strike = parse_double(f[idx.at("strike")]);
            const double mid = parse_double(f[idx.at("mid_price")]);
            const double forward = parse_double(f[idx.at("forward")]);
            const double discount = parse_double(f[idx.at("discount")]);
            const double close = parse_double(f[idx.at("underlying_close")]);
            if (!(strike > 0.0) || !std::isfinite(strike)) throw DataError("strike must be > 0");
            if (!(mid >= 0.0) || !std::isfinite(mid)) throw DataError("mid_price must be >= 0");
            if (!(forward > 0.0) || !std::isfinite(forward)) throw DataError("forward must be > 0");
            if (!(discount > 0.0 && discount <= 1.0)) throw DataError("discount must lie in (0, 1]");
            if (!(close > 0.0) || !std::isfinite(close)) throw DataError("underlying_close must be > 0");
            const int tau_days = days_between(date, expiry);
            if (tau_days < 1) throw DataError("expiry_date must follow date");
            ++res.n_rows;
            if (tau_days < opt.min_days || tau_days > opt.max_days) {
                ++res.n_filtered;
                continue;
            }
            auto& slice = by_date[date];
            if (slice.quotes.empty() && slice.underlying_close == 0.0) {
                slice.date = date;
                slice.underlying_close = close;
            } else if (slice.underlying_close != close) {
                throw DataError("underlying_close differs within one date");
            }
            OptionQuote q;
            q.contract.strike = strike;
            q.contract.tau_years = tau_days / 365.0;
            q.contract.expiry_steps = tau_days;
            q.mid_price = mid;
            q.forward_quote = {forward, discount};
            q.expiry = expiry;
            q.tau_days = tau_days;
            slice.quotes.push_back(q);
        } catch (const DataError& e) {
            const std::string msg = e.what();
            throw DataError(msg.rfind("line ", 0) == 0 ? msg : where + msg);
        }
    }
    if (res.n_rows == 0) throw DataError("slice file has no rows");
    for (auto& [date, slice] : by_date) {
        std::stable_sort(slice.quotes.begin(), slice.quotes.end(), [](const OptionQuote& a, const OptionQuote& b) {
            return a.expiry != b.expiry ? a.expiry < b.expiry : a.contract.strike < b.contract.strike;
        });
        if (!slice.quotes.empty()) res.slices.push_back(std::move(slice));
    }
    return res;
}

IngestResult ingest(const std::string& path, const IngestOptions& opt) {
    auto f = open_in(path);
    try {
        return ingest(f, opt);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void write_slices(std::ostream& out, const std::vector<OptionSlice>& slices) {
    out << "schema_version,date,expiry_date,strike,mid_price,forward,discount,underlying_close\n";
    for (const auto& s : slices)
        for (const auto& q : s.quotes)
            out << kSliceSchemaVersion << ',' << format_date(s.date) << ',' << format_date(q.expiry) << ','
                << format_double(q.contract.strike) << ',' << format_double(q.mid_price) << ','
                << format_double(q.forward_quote.forward) << ',' << format_double(q.forward_quote.discount) << ','
                << format_double(s.underlying_close) << '\n';
}

void write_slices(const std::string& path, const std::vector<OptionSlice>& slices) {
    auto f = open_out(path);
    write_slices(f, slices);
}

// ---------------------------------------------------------------------------
// Synthetic chains

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_days < 1) throw DataError("generate_synthetic: n_days must be >= 1");
    if (!(spec.s0 > 0.0) || !(spec.path_sigma >= 0.0)) throw ParameterError("generate_synthetic: bad path parameters");
    if (spec.moneyness.empty()) throw ParameterError("generate_synthetic: empty moneyness grid");
    if (!(spec.noise_bp >= 0.0)) throw ParameterError("generate_synthetic: noise_bp must be >= 0");
    validate(spec.model);

    // Weekdays from the start date.
    std::vector<Date> dates;
    for (chr::sys_days d{spec.start}; static_cast<int>(dates.size()) < spec.n_days; d += chr::days{1}) {
        const chr::weekday wd{d};
        if (wd != chr::Saturday && wd != chr::Sunday) dates.emplace_back(d);
    }

    NormalRng path_rng(derive_seed(spec.seed, "synthetic/path"));
    NormalRng noise_rng(derive_seed(spec.seed, "synthetic/noise"));
    SyntheticData out;
    double spot = spec.s0;
    for (std::size_t k = 0; k < dates.size(); ++k) {
        if (k > 0) {
            const double dt = days_between(dates[k - 1], dates[k]) / 365.0;
            const double sig = spec.path_sigma;
            spot *= std::exp((spec.mu - 0.5 * sig * sig) * dt + sig * std::sqrt(dt) * path_rng.normal());
        }
        OptionSlice slice;
        slice.date = dates[k];
        slice.underlying_close = spot;
        for (int tau_days = spec.min_days; tau_days <= spec.max_days; ++tau_days) {
            const Date expiry{chr::sys_days{dates[k]} + chr::days{tau_days}};
            if (chr::weekday{chr::sys_days{expiry}} != chr::Friday) continue;
            const double tau = tau_days / 365.0;
            const ForwardQuote fq{spot * std::exp(spec.carry * tau), std::exp(-spec.rate * tau)};
            for (double m : spec.moneyness) {
                OptionQuote q;
                q.contract.strike = m * fq.forward;
                q.contract.tau_years = tau;
                q.contract.expiry_steps = tau_days;
                q.forward_quote = fq;
                q.expiry = expiry;
                q.tau_days = tau_days;
                q.mid_price = model_price(spec.model, fq, q.contract);
                if (spec.noise_bp > 0.0) q.mid_price *= 1.0 + spec.noise_bp * 1e-4 * (2.0 * noise_rng.uniform() - 1.0);
                slice.quotes.push_back(q);
            }
        }
        out.slices.push_back(std::move(slice));
    }
    out.truth = {{"schema_version", kSliceSchemaVersion},
                 {"model", model_params_json(spec.model)},
                 {"s0", spec.s0},
                 {"mu", spec.mu},
                 {"path_sigma", spec.path_sigma},
                 {"rate", spec.rate},
                 {"carry", spec.carry},
                 {"n_days", spec.n_days},
                 {"start", format_date(spec.start)},
                 {"moneyness", spec.moneyness},
                 {"min_days", spec.min_days},
                 {"max_days", spec.max_days},
                 {"noise_bp", spec.noise_bp},
                 {"seed", spec.seed}};
    return out;
}

// ---------------------------------------------------------------------------
// Outcome files

void write_outcomes(std::ostream& out, const std::vector<OutcomeRow>& rows) {
    out << "schema_version,date,asset,model,bucket,target_moneyness,cost_rate,pnl_net,tc_total,xi,n_rebalances,"
           "status\n";
    for (const auto& r : rows)
        out << OutcomeRow::kSchemaVersion << ',' << format_date(r.date) << ',' << r.asset << ',' << r.model << ','
            << r.bucket << ',' << format_double(r.target_moneyness) << ',' << format_double(r.cost_rate) << ','
            << format_double(r.pnl_net) << ',' << format_double(r.tc_total) << ',' << format_double(r.xi) << ','
            << r.n_rebalances << ',' << r.status << '\n';
}

void write_outcomes(const std::string& path, const std::vector<OutcomeRow>& rows) {
    auto f = open_out(path);
    write_outcomes(f, rows);
}

std::vector<OutcomeRow> read_outcomes(std::istream& in) {
    static const std::vector<std::string> kColumns{"date",    "asset",    "model", "bucket",       "target_moneyness",
                                                   "cost_rate", "pnl_net", "tc_total", "xi", "n_rebalances", "status"};
    std::string line;
    if (!std::getline(in, line) || line.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError("outcome file is empty");
    const auto idx = header_index(line, kColumns);
    std::vector<OutcomeRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = split_csv_line(line);
        const auto where = "line " + std::to_string(line_no) + ": ";
        if (f.size() != idx.size()) throw DataError(where + "expected " + std::to_string(idx.size()) + " fields");
        try {
            if (idx.contains("schema_version") && parse_int(f[idx.at("schema_version")]) != OutcomeRow::kSchemaVersion)
                throw DataError("unsupported schema_version");
            OutcomeRow r;
            r.date = parse_date(f[idx.at("date")]);
            r.asset = f[idx.at("asset")];
            r.model = f[idx.at("model")];
            r.bucket = parse_int(f[idx.at("bucket")]);
            r.target_moneyness = parse_double(f[idx.at("target_moneyness")]);
            r.cost_rate = parse_double(f[idx.at("cost_rate")]);
            r.pnl_net = parse_double(f[idx.at("pnl_net")]);
            r.tc_total = parse_double(f[idx.at("tc_total")]);
            r.xi = parse_double(f[idx.at("xi")]);
            r.n_rebalances = parse_int(f[idx.at("n_rebalances")]);
            r.status = f[idx.at("status")];
            if (r.status == "ok") {
                if (r.xi != r.pnl_net + r.tc_total) throw DataError("xi != pnl_net + tc_total");
                if (!(r.tc_total >= 0.0)) throw DataError("tc_total must be >= 0");
            }
            rows.push_back(std::move(r));
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
    }
    return rows;
}

std::vector<OutcomeRow> read_outcomes(const std::string& path) {
    auto f = open_in(path);
    try {
        return read_outcomes(f);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Run configuration

RunConfig::RunConfig() {
    qlbs.gbm = gbm;
    qlbs.contract = horizon_contract(gbm, 1.0);
    qlbs.lambda_risk = 0.1;
    rlop.gbm = gbm;
    train.n_batches = 2000;
    train.lr_extra = 1e-3;
}

namespace {

struct KeyDoc {
    const char* path;
    const char* doc;
};

const std::vector<KeyDoc>& key_docs() {
    static const std::vector<KeyDoc> docs{
        {"/seed", "root seed; every stream is derived from it by label"},
        {"/output_dir", "directory for pipeline outputs"},
        {"/asset", "asset label written to outcome rows"},
        {"/gbm/mu", "drift of the training environment, per year"},
        {"/gbm/sigma", "volatility of the training environment, per sqrt-year"},
        {"/gbm/r", "riskless rate of the training environment, per year"},
        {"/gbm/s0", "initial price of the training environment"},
        {"/gbm/horizon_steps", "steps per training episode"},
        {"/gbm/dt", "step length in years"},
        {"/qlbs/strike", "training strike"},
        {"/qlbs/lambda_risk", "risk-aversion weight"},
        {"/qlbs/epsilon_tc", "proportional trading cost in training"},
        {"/qlbs/batch_paths", "paths per variance estimate"},
        {"/rlop/strike", "training strike shared by every maturity"},
        {"/rlop/epsilon_tc", "proportional trading cost in training"},
        {"/rlop/penalty", "abs or squared terminal penalty"},
        {"/rlop/premium_mode", "learned or fixed initial wealth"},
        {"/rlop/fixed_w0", "initial wealth when premium_mode is fixed"},
        {"/train/episodes_per_batch", "paths per training batch"},
        {"/train/n_batches", "maximum number of batches"},
        {"/train/lr_policy", "Adam step size of the policy network"},
        {"/train/lr_value", "Adam step size of the value network"},
        {"/train/lr_extra", "Adam step size of the learned initial wealth"},
        {"/train/eval_paths", "fresh paths for the final price"},
        {"/train/convergence_window", "batches per moving-average window"},
        {"/train/convergence_tol", "relative change of the moving average that stops training"},
        {"/train/early_stop", "stop once the moving average settles"},
        {"/train/grad_clip", "global gradient-norm clip per network"},
        {"/train/hidden_width", "hidden units per layer"},
        {"/train/n_residual_blocks", "residual blocks per network"},
        {"/train/init_log_std", "initial policy log standard deviation"},
        {"/backtest/cost_rates", "proportional cost rates c to backtest"},
        {"/backtest/models", "delta sources: bs, jd, heston, qlbs, rlop"},
        {"/backtest/bucket_centers", "maturity buckets to hedge, by center in days"},
        {"/backtest/targets", "moneyness targets K/F"},
        {"/buckets", "maturity buckets as {center, lo, hi} in calendar days, inclusive"},
        {"/calibration/restarts", "Nelder-Mead restarts"},
        {"/calibration/max_evals_per_restart", "objective evaluations per restart"},
        {"/calibration/simplex_step", "initial simplex edge in unit-box coordinates"},
        {"/calibration/f_tol", "objective spread that ends a restart"},
        {"/calibration/polish", "Levenberg-Marquardt polish of the best restart"},
        {"/calibration/polish_iterations", "polish iterations"},
        {"/synthetic/model", "pricing model of generated chains: {kind, parameters}"},
        {"/synthetic/s0", "initial underlying price"},
        {"/synthetic/mu", "drift of the generated underlying"},
        {"/synthetic/path_sigma", "volatility of the generated underlying"},
        {"/synthetic/rate", "riskless rate of generated quotes"},
        {"/synthetic/carry", "carry rate: F = S exp(carry tau)"},
        {"/synthetic/n_days", "trading days to generate"},
        {"/synthetic/start", "first calendar date"},
        {"/synthetic/moneyness", "K/F grid per expiry"},
        {"/synthetic/min_days", "shortest listed expiry in days"},
        {"/synthetic/max_days", "longest listed expiry in days"},
        {"/synthetic/noise_bp", "uniform relative price noise in basis points"},
        {"/pricing_paths", "evaluation paths per policy price in the implied-vol diagnostic"},
    };
    return docs;
}

void reject_unknown(const json& given, const json& known, const std::string& where) {
    for (const auto& [key, value] : given.items()) {
        const auto path = where + "/" + key;
        if (!known.contains(key)) throw DataError("config: unknown key " + path);
        if (path == "/synthetic/model") continue;  // checked by its own parser
        if (value.is_object() && known.at(key).is_object()) reject_unknown(value, known.at(key), path);
    }
}

std::string penalty_name(PenaltyKind p) { return p == PenaltyKind::AbsError ? "abs" : "squared"; }

}  // namespace

json to_json(const RunConfig& c) {
    json buckets = json::array();
    for (const auto& b : c.buckets) buckets.push_back({{"center", b.center_days}, {"lo", b.lo_days}, {"hi", b.hi_days}});
    const auto& t = c.train;
    const auto& s = c.synthetic;
    return {{"seed", c.seed},
            {"output_dir", c.output_dir},
            {"asset", c.asset},
            {"gbm", detail::gbm_json(c.gbm)},
            {"qlbs",
             {{"strike", c.qlbs.contract.strike},
              {"lambda_risk", c.qlbs.lambda_risk},
              {"epsilon_tc", c.qlbs.epsilon_tc},
              {"batch_paths", c.qlbs.batch_paths}}},
            {"rlop",
             {{"strike", c.rlop.strike},
              {"epsilon_tc", c.rlop.epsilon_tc},
              {"penalty", penalty_name(c.rlop.penalty)},
              {"premium_mode", c.rlop.premium_mode == PremiumMode::LearnedInitialWealth ? "learned" : "fixed"},
              {"fixed_w0", c.rlop.fixed_w0}}},
            {"train",
             {{"episodes_per_batch", t.episodes_per_batch},
              {"n_batches", t.n_batches},
              {"lr_policy", t.lr_policy},
              {"lr_value", t.lr_value},
              {"lr_extra", t.lr_extra},
              {"eval_paths", t.eval_paths},
              {"convergence_window", t.convergence_window},
              {"convergence_tol", t.convergence_tol},
              {"early_stop", t.early_stop},
              {"grad_clip", t.grad_clip},
              {"hidden_width", t.hidden_width},
              {"n_residual_blocks", t.n_residual_blocks},
              {"init_log_std", t.init_log_std}}},
            {"backtest",
             {{"cost_rates", c.cost_rates},
              {"models", c.models},
              {"bucket_centers", c.bucket_centers},
              {"targets", c.targets}}},
            {"buckets", buckets},
            {"calibration",
             {{"restarts", c.calibration.restarts},
              {"max_evals_per_restart", c.calibration.max_evals_per_restart},
              {"simplex_step", c.calibration.simplex_step},
              {"f_tol", c.calibration.f_tol},
              {"polish", c.calibration.polish},
              {"polish_iterations", c.calibration.polish_iterations}}},
            {"synthetic",
             {{"model", model_params_json(s.model)},
              {"s0", s.s0},
              {"mu", s.mu},
              {"path_sigma", s.path_sigma},
              {"rate", s.rate},
              {"carry", s.carry},
              {"n_days", s.n_days},
              {"start", format_date(s.start)},
              {"moneyness", s.moneyness},
              {"min_days", s.min_days},
              {"max_days", s.max_days},
              {"noise_bp", s.noise_bp}}},
            {"pricing_paths", c.pricing_paths}};
}

json run_config_defaults() { return to_json(RunConfig{}); }

std::string run_config_reference() {
    const json d = run_config_defaults();
    std::string out = "# Run configuration keys (JSON pointer = default: meaning)\n";
    for (const auto& k : key_docs())
        out += fmt::format("{} = {}: {}\n", k.path, d.at(json::json_pointer(k.path)).dump(), k.doc);
    return out;
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw DataError("config: top level must be an object");
    const json defaults = run_config_defaults();
    reject_unknown(j, defaults, "");
    json m = defaults;
    m.merge_patch(j);
    if (j.contains("synthetic") && j["synthetic"].contains("model")) m["synthetic"]["model"] = j["synthetic"]["model"];
    try {
        RunConfig c;
        c.seed = m.at("seed").get<std::uint64_t>();
        c.output_dir = m.at("output_dir").get<std::string>();
        c.asset = m.at("asset").get<std::string>();
        c.gbm = detail::gbm_from_json(m.at("gbm"));

        const auto& q = m.at("qlbs");
        c.qlbs.gbm = c.gbm;
        c.qlbs.contract = horizon_contract(c.gbm, q.at("strike").get<double>());
        c.qlbs.lambda_risk = q.at("lambda_risk").get<double>();
        c.qlbs.epsilon_tc = q.at("epsilon_tc").get<double>();
        c.qlbs.batch_paths = q.at("batch_paths").get<int>();

        json r = m.at("rlop");
        r["gbm"] = m.at("gbm");
        c.rlop = rlop_config_from_json(r);

        const auto& t = m.at("train");
        c.train.episodes_per_batch = t.at("episodes_per_batch").get<int>();
        c.train.n_batches = t.at("n_batches").get<int>();
        c.train.lr_policy = t.at("lr_policy").get<double>();
        c.train.lr_value = t.at("lr_value").get<double>();
        c.train.lr_extra = t.at("lr_extra").get<double>();
        c.train.eval_paths = t.at("eval_paths").get<int>();
        c.train.convergence_window = t.at("convergence_window").get<int>();
        c.train.convergence_tol = t.at("convergence_tol").get<double>();
        c.train.early_stop = t.at("early_stop").get<bool>();
        c.train.grad_clip = t.at("grad_clip").get<double>();
        c.train.hidden_width = t.at("hidden_width").get<int>();
        c.train.n_residual_blocks = t.at("n_residual_blocks").get<int>();
        c.train.init_log_std = t.at("init_log_std").get<double>();

        const auto& b = m.at("backtest");
        c.cost_rates = b.at("cost_rates").get<std::vector<double>>();
        c.models = b.at("models").get<std::vector<std::string>>();
        c.bucket_centers = b.at("bucket_centers").get<std::vector<int>>();
        c.targets = b.at("targets").get<std::vector<double>>();

        c.buckets.clear();
        for (const auto& e : m.at("buckets")) {
            for (const auto& [key, _] : e.items())
                if (key != "center" && key != "lo" && key != "hi") throw DataError("config: unknown bucket key " + key);
            c.buckets.push_back({e.at("center").get<int>(), e.at("lo").get<int>(), e.at("hi").get<int>()});
        }

        const auto& k = m.at("calibration");
        c.calibration.restarts = k.at("restarts").get<int>();
        c.calibration.max_evals_per_restart = k.at("max_evals_per_restart").get<int>();
        c.calibration.simplex_step = k.at("simplex_step").get<double>();
        c.calibration.f_tol = k.at("f_tol").get<double>();
        c.calibration.polish = k.at("polish").get<bool>();
        c.calibration.polish_iterations = k.at("polish_iterations").get<int>();

        const auto& s = m.at("synthetic");
        c.synthetic.model = model_params_from_json(s.at("model"));
        c.synthetic.s0 = s.at("s0").get<double>();
        c.synthetic.mu = s.at("mu").get<double>();
        c.synthetic.path_sigma = s.at("path_sigma").get<double>();
        c.synthetic.rate = s.at("rate").get<double>();
        c.synthetic.carry = s.at("carry").get<double>();
        c.synthetic.n_days = s.at("n_days").get<int>();
        c.synthetic.start = parse_date(s.at("start").get<std::string>());
        c.synthetic.moneyness = s.at("moneyness").get<std::vector<double>>();
        c.synthetic.min_days = s.at("min_days").get<int>();
        c.synthetic.max_days = s.at("max_days").get<int>();
        c.synthetic.noise_bp = s.at("noise_bp").get<double>();
        c.synthetic.seed = derive_seed(c.seed, "synthetic");

        c.pricing_paths = m.at("pricing_paths").get<int>();

        c.qlbs.validate();
        c.rlop.validate();
        c.train.validate();
        for (double cr : c.cost_rates)
            if (!(cr >= 0.0)) throw DataError("config: cost rates must be >= 0");
        for (const auto& name : c.models)
            if (name != "qlbs" && name != "rlop") model_kind_from_string(name);
        return c;
    } catch (const json::exception& e) {
        throw DataError(std::string("config: ") + e.what());
    } catch (const ParameterError& e) {
        throw DataError(std::string("config: ") + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    auto f = open_in(path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Manifests

std::string file_digest(const std::string& path) {
    auto f = open_in(path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return fmt::format("{:016x}", fnv1a64(bytes));
}

void write_manifest(const std::string& dir, const std::string& command, const std::vector<std::string>& argv,
                    const json& config, const std::vector<std::string>& outputs) {
    json files = json::array();
    // Paths relative to the manifest so identical runs in different directories match.
    for (const auto& o : outputs)
        files.push_back({{"path", std::filesystem::path(o).lexically_relative(dir).generic_string()},
                         {"fnv1a64", file_digest(o)}});
    const json manifest{
        {"schema_version", 1},
        {"command", command},
        {"argv", argv},
        {"config", config},
        {"config_fnv1a64", fmt::format("{:016x}", fnv1a64(config.dump()))},
        {"versions",
         {{"rlhedge", "0.1.0"},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}}},
        {"outputs", files}};
    auto f = open_out(dir + "/" + command + ".manifest.json");
    f << manifest.dump(2) << '\n';
}

}  // namespace rlhedge
