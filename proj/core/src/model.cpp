#include "odevae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "csv_util.hpp"

namespace odevae {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr int kDecoderHidden = 10;

// cols == 0 produces a rank-1 tensor of length rows (a bias vector).
Tensor uniform_init(int rows, int cols, double range, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-range, range);
    std::vector<double> v(static_cast<std::size_t>(rows * std::max(cols, 1)));
    for (double& x : v) x = dist(rng);
    if (cols == 0) return Tensor::vector(std::move(v));
    return Tensor::matrix(rows, cols, std::move(v));
}

LinearLayer init_layer(int out, int in, double scale, std::mt19937_64& rng) {
    const double range = scale / std::sqrt(static_cast<double>(in));
    return LinearLayer{uniform_init(out, in, range, rng), uniform_init(out, 0, range, rng)};
}

Var linear(const Var& W, const Var& b, const Var& x) { return add(matmul(W, x), b); }

std::vector<double> linear_numeric(const LinearLayer& l, const std::vector<double>& x) {
    const int out = l.W.shape()[0];
    const int in = l.W.shape()[1];
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
        double s = l.b[i];
        for (int j = 0; j < in; ++j) s += l.W.at(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = s;
    }
    return y;
}

void check_finite(const std::vector<double>& x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw ad::TensorError(std::string(what) + ": non-finite input");
}

}  // namespace

ModelParams ModelParams::init(Scenario s, int p, int q, std::uint64_t seed) {
    if (p < 1 || q < 1) throw std::invalid_argument("ModelParams::init: p and q must be >= 1");
    ModelParams m;
    m.p = p;
    m.q = q;
    m.scenario = s;
    m.n_eta = static_cast<int>(paper_group_eta(s, 0).size());
    if (s == Scenario::LotkaVolterra) {
        m.onet_sigmoid_scale = 2.0;
        m.onet_sigmoid_shift = 0.0;
    }

    const double scale = s == Scenario::LotkaVolterra ? 0.1 : 1.0;
    std::mt19937_64 rng(seed);
    m.enc_hidden = init_layer(p, p, scale, rng);
    m.enc_mu = init_layer(m.latent_dim, p, scale, rng);
    m.enc_logvar = init_layer(m.latent_dim, p, scale, rng);
    m.dec_hidden = init_layer(kDecoderHidden, m.latent_dim, scale, rng);
    m.dec_mean = init_layer(p, kDecoderHidden, scale, rng);
    m.dec_logvar = init_layer(p, kDecoderHidden, scale, rng);
    m.onet_hidden = init_layer(q, q, scale, rng);
    m.onet_param = init_layer(m.n_eta, q, scale, rng);
    m.onet_out_scale = Tensor::vector(std::vector<double>(static_cast<std::size_t>(m.n_eta), 1.0));
    m.onet_out_bias = Tensor::vector(std::vector<double>(static_cast<std::size_t>(m.n_eta), 0.0));
    return m;
}

std::vector<Tensor*> ModelParams::parameters() {
    return {&enc_hidden.W, &enc_hidden.b, &enc_mu.W,      &enc_mu.b,     &enc_logvar.W,
            &enc_logvar.b, &dec_hidden.W, &dec_hidden.b,  &dec_mean.W,   &dec_mean.b,
            &dec_logvar.W, &dec_logvar.b, &onet_hidden.W, &onet_hidden.b, &onet_param.W,
            &onet_param.b, &onet_out_scale, &onet_out_bias};
}

std::vector<const Tensor*> ModelParams::parameters() const {
    auto ps = const_cast<ModelParams*>(this)->parameters();
    return std::vector<const Tensor*>(ps.begin(), ps.end());
}

std::vector<std::string> ModelParams::parameter_names() const {
    return {"enc_hidden.W", "enc_hidden.b", "enc_mu.W",      "enc_mu.b",      "enc_logvar.W",
            "enc_logvar.b", "dec_hidden.W", "dec_hidden.b",  "dec_mean.W",    "dec_mean.b",
            "dec_logvar.W", "dec_logvar.b", "onet_hidden.W", "onet_hidden.b", "onet_param.W",
            "onet_param.b", "onet_out_scale", "onet_out_bias"};
}

void ModelParams::save(const std::string& path) const {
    auto f = csvutil::open_out(path);
    f << "odevae-checkpoint v1\n";
    f << "scenario " << scenario_name(scenario) << "\n";
    f << "p " << p << "\nq " << q << "\nlatent_dim " << latent_dim << "\nn_eta " << n_eta << "\n";
    f << "sigmoid_scale " << csvutil::fmt(onet_sigmoid_scale) << "\n";
    f << "sigmoid_shift " << csvutil::fmt(onet_sigmoid_shift) << "\n";
    auto names = parameter_names();
    auto tensors = parameters();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const Tensor& t = *tensors[i];
        f << "tensor " << names[i] << " " << t.rank();
        for (int d : t.shape()) f << " " << d;
        f << "\n";
        for (int j = 0; j < t.size(); ++j) f << (j ? " " : "") << csvutil::fmt(t[j]);
        f << "\n";
    }
}

ModelParams ModelParams::load(const std::string& path) {
    auto f = csvutil::open_in(path);
    std::string word;
    f >> word;
    std::string version;
    f >> version;
    if (word != "odevae-checkpoint" || version != "v1")
        throw std::runtime_error(path + ": not a v1 checkpoint file");

    ModelParams m;
    std::string scen;
    f >> word >> scen;
    m.scenario = scenario_from_string(scen);
    f >> word >> m.p >> word >> m.q >> word >> m.latent_dim >> word >> m.n_eta;
    f >> word >> m.onet_sigmoid_scale >> word >> m.onet_sigmoid_shift;

    // Allocate with the right shapes, then fill from the file.
    ModelParams shaped = ModelParams::init(m.scenario, m.p, m.q, 0);
    shaped.onet_sigmoid_scale = m.onet_sigmoid_scale;
    shaped.onet_sigmoid_shift = m.onet_sigmoid_shift;
    auto names = shaped.parameter_names();
    auto tensors = shaped.parameters();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        std::string name;
        int rank;
        f >> word >> name >> rank;
        if (word != "tensor" || name != names[i])
            throw std::runtime_error(path + ": unexpected tensor record '" + name + "'");
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int& d : shape) f >> d;
        std::vector<double> vals(static_cast<std::size_t>(Tensor::shape_size(shape)));
        for (double& v : vals) f >> v;
        if (!f) throw std::runtime_error(path + ": truncated tensor data for " + name);
        *tensors[i] = Tensor(shape, std::move(vals));
    }
    return shaped;
}

TapedParams::TapedParams(Tape& tape, const ModelParams& params) : spec(&params) {
    for (const Tensor* t : params.parameters()) vars.push_back(tape.leaf(*t));
}

std::pair<Var, Var> encode(Tape& tape, const TapedParams& tp, const std::vector<double>& x) {
    check_finite(x, "encode");
    Var xv = tape.constant(Tensor::vector(x));
    Var hidden = shift(tanh(linear(tp[0], tp[1], xv)), 1.0);
    Var mu = linear(tp[2], tp[3], hidden);
    Var logvar = linear(tp[4], tp[5], hidden);
    Var sigma = exp(scale(logvar, 0.5));
    if (!mu.value().all_finite() || !sigma.value().all_finite())
        throw ad::TensorError("encode: non-finite activations");
    return {mu, sigma};
}

Var ode_net(Tape& tape, const TapedParams& tp, const std::vector<double>& x_star) {
    check_finite(x_star, "ode_net");
    Var xv = tape.constant(Tensor::vector(x_star));
    Var h1 = tanh(linear(tp[12], tp[13], xv));
    Var h2 = shift(scale(sigmoid(linear(tp[14], tp[15], h1)), tp.spec->onet_sigmoid_scale),
                   tp.spec->onet_sigmoid_shift);
    return add(mul(tp[16], h2), tp[17]);
}

std::pair<Var, Var> decode(const TapedParams& tp, Var z) {
    Var hidden = tanh(linear(tp[6], tp[7], z));
    Var mean = linear(tp[8], tp[9], hidden);
    Var variance = exp(linear(tp[10], tp[11], hidden));
    return {mean, variance};
}

Var reparam_sample(Var mu_tilde, Var sigma, const std::vector<double>& epsilon) {
    if (static_cast<int>(epsilon.size()) != mu_tilde.value().size())
        throw std::invalid_argument("reparam_sample: epsilon size mismatch");
    Var eps = mu_tilde.tape->constant(Tensor::vector(epsilon));
    return add(mu_tilde, mul(sigma, eps));
}

Var kl_gaussian(Var mu, Var sigma) {
    Var s2 = square(sigma);
    const double m = static_cast<double>(mu.value().size());
    Var raw = sub(add(sum(s2), sqnorm(mu)), sum(log(s2)));
    return scale(shift(raw, -m), 0.5);
}

double kl_gaussian(const std::vector<double>& mu, const std::vector<double>& sigma) {
    if (mu.size() != sigma.size()) throw std::invalid_argument("kl_gaussian: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (sigma[i] <= 0.0) throw std::invalid_argument("kl_gaussian: sigma must be positive");
        const double s2 = sigma[i] * sigma[i];
        s += s2 + mu[i] * mu[i] - 1.0 - std::log(s2);
    }
    return 0.5 * s;
}

Var gaussian_nll(const std::vector<double>& x, Var mean, Var variance) {
    if (static_cast<int>(x.size()) != mean.value().size())
        throw std::invalid_argument("gaussian_nll: size mismatch");
    Tape& tape = *mean.tape;
    Var xv = tape.constant(Tensor::vector(x));
    Var resid = square(sub(xv, mean));
    Var quad = sum(div(resid, variance));
    Var logdet = sum(log(scale(variance, 2.0 * std::numbers::pi)));
    return scale(add(logdet, quad), 0.5);
}

double gaussian_nll(const std::vector<double>& x, const std::vector<double>& mean,
                    const std::vector<double>& variance) {
    if (x.size() != mean.size() || x.size() != variance.size())
        throw std::invalid_argument("gaussian_nll: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (variance[i] <= 0.0) throw std::invalid_argument("gaussian_nll: variance must be positive");
        const double r = x[i] - mean[i];
        s += std::log(2.0 * std::numbers::pi * variance[i]) + r * r / variance[i];
    }
    return 0.5 * s;
}

std::pair<std::vector<double>, std::vector<double>> encode_numeric(const ModelParams& params,
                                                                   const std::vector<double>& x) {
    check_finite(x, "encode");
    std::vector<double> hidden = linear_numeric(params.enc_hidden, x);
    for (double& h : hidden) h = std::tanh(h) + 1.0;
    std::vector<double> mu = linear_numeric(params.enc_mu, hidden);
    std::vector<double> sigma = linear_numeric(params.enc_logvar, hidden);
    for (double& s : sigma) s = std::exp(0.5 * s);
    return {std::move(mu), std::move(sigma)};
}

std::vector<double> ode_net_numeric(const ModelParams& params, const std::vector<double>& x_star) {
    check_finite(x_star, "ode_net");
    std::vector<double> h1 = linear_numeric(params.onet_hidden, x_star);
    for (double& h : h1) h = std::tanh(h);
    std::vector<double> h2 = linear_numeric(params.onet_param, h1);
    for (double& h : h2)
        h = params.onet_sigmoid_scale / (1.0 + std::exp(-h)) + params.onet_sigmoid_shift;
    std::vector<double> eta(h2.size());
    for (std::size_t i = 0; i < h2.size(); ++i)
        eta[i] = params.onet_out_scale[static_cast<int>(i)] * h2[i] +
                 params.onet_out_bias[static_cast<int>(i)];
    return eta;
}

LossBreakdown LossGraph::breakdown() const {
    LossBreakdown b;
    b.total = total.value().item();
    b.kl_term = kl.value().item();
    b.recon_term = recon.value().item();
    b.match_term = match.value().item();
    b.weight_penalty = penalty.value().item();
    return b;
}

LossGraph compute_loss(Tape& tape, const Individual& ind, const TapedParams& tp,
                       const OdeSystem& sys, double alpha, const NoiseDraw& epsilon,
                       const SolverConfig& solver) {
    const std::size_t K = ind.observations.size();
    if (K < 2) throw std::invalid_argument("compute_loss: individual needs >= 2 time points");
    if (epsilon.size() != K) throw std::invalid_argument("compute_loss: need one noise draw per time point");

    std::vector<Var> mus, sigmas;
    for (const Observation& o : ind.observations) {
        auto [mu, sigma] = encode(tape, tp, o.x);
        mus.push_back(mu);
        sigmas.push_back(sigma);
    }

    Var eta = ode_net(tape, tp, ind.baseline);

    std::vector<double> times;
    for (const Observation& o : ind.observations) times.push_back(o.t);
    // mu_tilde[0] is the t0 encoding itself (zero-length first integration).
    std::vector<Var> mu_tilde = solve_grid_taped(sys, eta, mus[0], times, solver);

    Var kl = tape.constant(Tensor::scalar(0.0));
    Var recon = tape.constant(Tensor::scalar(0.0));
    Var match = tape.constant(Tensor::scalar(0.0));
    for (std::size_t k = 0; k < K; ++k) {
        kl = add(kl, kl_gaussian(mu_tilde[k], sigmas[k]));
        Var z = reparam_sample(mu_tilde[k], sigmas[k], epsilon[k]);
        auto [mean, variance] = decode(tp, z);
        recon = add(recon, gaussian_nll(ind.observations[k].x, mean, variance));
        if (k >= 1) match = add(match, sqnorm(sub(mus[k], mu_tilde[k])));
    }

    Var penalty = tape.constant(Tensor::scalar(0.0));
    for (int i = ParamGroups::kDecoderBegin; i < ParamGroups::kDecoderEnd; ++i)
        penalty = add(penalty, sqnorm(tp[static_cast<std::size_t>(i)]));

    LossGraph g;
    g.kl = kl;
    g.recon = recon;
    g.match = match;
    g.penalty = penalty;
    g.total = add(add(scale(kl, kKlFactor), recon),
                  add(scale(match, alpha), scale(penalty, kDecoderPenalty)));
    return g;
}

}  // namespace odevae
