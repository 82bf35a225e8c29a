#include "rlhedge/neuralpolicy.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "rlhedge/errors.hpp"
#include "rlhedge/rng.hpp"

namespace rlhedge {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void NetSpec::validate() const {
    if (input_dim < 1) throw ParameterError("NetSpec: input_dim must be >= 1");
    if (hidden_width < 1) throw ParameterError("NetSpec: hidden_width must be >= 1");
    if (n_residual_blocks < 1) throw ParameterError("NetSpec: n_residual_blocks must be >= 1");
    if (input_shift.size() != 0 && input_shift.size() != input_dim)
        throw ParameterError("NetSpec: input_shift length must equal input_dim");
    if (input_scale.size() != 0 && input_scale.size() != input_dim)
        throw ParameterError("NetSpec: input_scale length must equal input_dim");
}

ParamLayout param_layout(const NetSpec& spec) {
    spec.validate();
    const Index h = spec.hidden_width, d = spec.input_dim, o = spec.output_dim();
    ParamLayout l;
    Index at = 0;
    l.w_in = at, at += h * d;
    l.b_in = at, at += h;
    for (int k = 0; k < spec.n_residual_blocks; ++k) {
        l.w1.push_back(at), at += h * h;
        l.b1.push_back(at), at += h;
        l.w2.push_back(at), at += h * h;
        l.b2.push_back(at), at += h;
    }
    l.w_out = at, at += o * h;
    l.b_out = at, at += o;
    l.end = at;
    return l;
}

Index param_count(const NetSpec& spec) { return param_layout(spec).end; }

namespace {

using MatMap = Eigen::Map<const MatrixXd>;
using VecMap = Eigen::Map<const VectorXd>;

MatMap mat(const ParamVector& p, Index at, Index rows, Index cols) { return MatMap(p.data() + at, rows, cols); }
VecMap vec(const ParamVector& p, Index at, Index n) { return VecMap(p.data() + at, n); }

MatrixXd standardize(const NetSpec& spec, const MatrixXd& inputs) {
    MatrixXd s = inputs;
    if (spec.input_shift.size()) s.colwise() -= spec.input_shift;
    if (spec.input_scale.size()) s = spec.input_scale.asDiagonal() * s;
    return s;
}

void check_finite(const MatrixXd& m, const char* where) {
    if (!m.allFinite()) throw NumericError(std::string("network: non-finite values in ") + where);
}

}  // namespace

ParamVector init_params(const NetSpec& spec, std::uint64_t seed, double init_log_std) {
    const auto l = param_layout(spec);
    const Index h = spec.hidden_width, d = spec.input_dim, o = spec.output_dim();
    ParamVector p = ParamVector::Zero(l.end);
    NormalRng rng(seed);
    auto fill = [&](Index at, Index n, Index fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Index i = 0; i < n; ++i) p(at + i) = bound * (2.0 * rng.uniform() - 1.0);
    };
    fill(l.w_in, h * d, d);
    for (int k = 0; k < spec.n_residual_blocks; ++k) {
        fill(l.w1[k], h * h, h);
        fill(l.w2[k], h * h, h);
    }
    if (spec.head == HeadKind::GaussianPolicy) {
        // W_out stays zero: constant zero mean and constant std at start.
        p(l.b_out + 1) = init_log_std;
    } else {
        fill(l.w_out, o * h, h);
    }
    return p;
}

MatrixXd forward(const NetSpec& spec, const ParamVector& params, const MatrixXd& inputs, Tape* tape) {
    const auto l = param_layout(spec);
    const Index h = spec.hidden_width, d = spec.input_dim, o = spec.output_dim();
    if (params.size() != l.end) throw ParameterError("forward: parameter vector has the wrong length");
    if (inputs.rows() != d) throw ParameterError("forward: input rows must equal input_dim");

    MatrixXd s = standardize(spec, inputs);
    MatrixXd hid = mat(params, l.w_in, h, d) * s;
    hid.colwise() += vec(params, l.b_in, h);
    if (tape) {
        tape->input = s;
        tape->hidden.assign(1, hid);
        tape->act.clear();
    }
    for (int k = 0; k < spec.n_residual_blocks; ++k) {
        MatrixXd z = mat(params, l.w1[k], h, h) * hid;
        z.colwise() += vec(params, l.b1[k], h);
        MatrixXd a = z.array().tanh().matrix();
        hid += mat(params, l.w2[k], h, h) * a;
        hid.colwise() += vec(params, l.b2[k], h);
        if (tape) {
            tape->act.push_back(std::move(a));
            tape->hidden.push_back(hid);
        }
    }
    check_finite(hid, "hidden layer");
    MatrixXd out = mat(params, l.w_out, o, h) * hid;
    out.colwise() += vec(params, l.b_out, o);
    check_finite(out, "output");
    return out;
}

ParamVector backward(const NetSpec& spec, const ParamVector& params, const Tape& tape, const MatrixXd& d_out,
                     MatrixXd* d_input) {
    const auto l = param_layout(spec);
    const Index h = spec.hidden_width, d = spec.input_dim, o = spec.output_dim();
    const int blocks = spec.n_residual_blocks;
    if (static_cast<int>(tape.hidden.size()) != blocks + 1) throw ParameterError("backward: tape does not match spec");
    if (d_out.rows() != o || d_out.cols() != tape.input.cols())
        throw ParameterError("backward: d_out shape does not match the forward batch");

    ParamVector g = ParamVector::Zero(l.end);
    auto gmat = [&](Index at, Index rows, Index cols) { return Eigen::Map<MatrixXd>(g.data() + at, rows, cols); };
    auto gvec = [&](Index at, Index n) { return Eigen::Map<VectorXd>(g.data() + at, n); };

    gmat(l.w_out, o, h).noalias() = d_out * tape.hidden.back().transpose();
    gvec(l.b_out, o) = d_out.rowwise().sum();
    MatrixXd dh = mat(params, l.w_out, o, h).transpose() * d_out;

    for (int k = blocks - 1; k >= 0; --k) {
        const MatrixXd& a = tape.act[k];
        const MatrixXd& h_prev = tape.hidden[k];
        gmat(l.w2[k], h, h).noalias() = dh * a.transpose();
        gvec(l.b2[k], h) = dh.rowwise().sum();
        const MatrixXd dz = ((mat(params, l.w2[k], h, h).transpose() * dh).array() * (1.0 - a.array().square())).matrix();
        gmat(l.w1[k], h, h).noalias() = dz * h_prev.transpose();
        gvec(l.b1[k], h) = dz.rowwise().sum();
        dh.noalias() += mat(params, l.w1[k], h, h).transpose() * dz;
    }
    gmat(l.w_in, h, d).noalias() = dh * tape.input.transpose();
    gvec(l.b_in, h) = dh.rowwise().sum();
    if (d_input) {
        *d_input = mat(params, l.w_in, h, d).transpose() * dh;
        if (spec.input_scale.size()) *d_input = spec.input_scale.asDiagonal() * *d_input;
    }
    return g;
}

GaussianHead gaussian_head(const MatrixXd& raw) {
    if (raw.rows() != 2) throw ParameterError("gaussian_head: expects two output rows");
    GaussianHead out;
    out.mean = raw.row(0).transpose();
    out.log_std = raw.row(1).transpose().cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
    out.std = out.log_std.array().exp().matrix();
    return out;
}

MatrixXd gaussian_head_backward(const MatrixXd& raw, const VectorXd& d_mean, const VectorXd& d_log_std) {
    MatrixXd d(2, raw.cols());
    d.row(0) = d_mean.transpose();
    for (Index n = 0; n < raw.cols(); ++n) {
        const double x = raw(1, n);
        d(1, n) = (x > kMinLogStd && x < kMaxLogStd) ? d_log_std(n) : 0.0;
    }
    return d;
}

GaussianLogPdf gaussian_logpdf_grad(double mu, double sigma, double action) {
    if (!(sigma > 0.0)) throw ParameterError("gaussian_logpdf_grad: sigma must be > 0");
    const double z = (action - mu) / sigma;
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    return {-half_log_2pi - std::log(sigma) - 0.5 * z * z, z / sigma, z * z - 1.0};
}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad) {
    if (grad.size() != params.size() || state.m.size() != params.size())
        throw ParameterError("adam_step: shape mismatch");
    if (!grad.allFinite()) throw NumericError("adam_step: non-finite gradient");
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= state.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

nlohmann::json to_json(const NetSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_width", spec.hidden_width},
            {"n_residual_blocks", spec.n_residual_blocks},
            {"head", spec.head == HeadKind::GaussianPolicy ? "gaussian_policy" : "scalar_value"},
            {"input_shift", vector_json(spec.input_shift)},
            {"input_scale", vector_json(spec.input_scale)}};
}

NetSpec net_spec_from_json(const nlohmann::json& j) {
    NetSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden_width = j.at("hidden_width").get<int>();
    s.n_residual_blocks = j.at("n_residual_blocks").get<int>();
    const auto head = j.at("head").get<std::string>();
    if (head == "gaussian_policy")
        s.head = HeadKind::GaussianPolicy;
    else if (head == "scalar_value")
        s.head = HeadKind::ScalarValue;
    else
        throw DataError("checkpoint: unknown head '" + head + "'");
    s.input_shift = vector_from_json(j.at("input_shift"));
    s.input_scale = vector_from_json(j.at("input_scale"));
    s.validate();
    return s;
}

nlohmann::json to_json(const PolicyCheckpoint& ckpt) {
    return {{"schema_version", PolicyCheckpoint::kSchemaVersion},
            {"method", ckpt.method},
            {"policy", {{"spec", to_json(ckpt.policy_spec)}, {"params", vector_json(ckpt.policy)}}},
            {"value", {{"spec", to_json(ckpt.value_spec)}, {"params", vector_json(ckpt.value)}}},
            {"extra", vector_json(ckpt.extra)},
            {"env", ckpt.env}};
}

PolicyCheckpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != PolicyCheckpoint::kSchemaVersion)
            throw DataError("checkpoint: unsupported schema_version");
        PolicyCheckpoint c;
        c.method = j.at("method").get<std::string>();
        c.policy_spec = net_spec_from_json(j.at("policy").at("spec"));
        c.policy = vector_from_json(j.at("policy").at("params"));
        c.value_spec = net_spec_from_json(j.at("value").at("spec"));
        c.value = vector_from_json(j.at("value").at("params"));
        c.extra = vector_from_json(j.at("extra"));
        c.env = j.at("env");
        if (c.policy.size() != param_count(c.policy_spec) || c.value.size() != param_count(c.value_spec))
            throw DataError("checkpoint: parameter count does not match its spec");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed: ") + e.what());
    }
}

void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out << to_json(ckpt).dump(1) << '\n';
}

PolicyCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace rlhedge
