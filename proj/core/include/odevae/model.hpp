#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odevae/datagen.hpp"
#include "odevae/ode.hpp"
#include "odevae/tape.hpp"

namespace odevae {

struct LinearLayer {
    ad::Tensor W;  // (out, in)
    ad::Tensor b;  // (out)
};

/// All learnable parameters of the ODE-VAE.
///
/// Encoder: p -> p hidden (tanh + 1), affine mean and log-variance heads to
/// the 2-d latent space. Decoder: 2 -> 10 hidden (tanh), affine mean and
/// log-variance heads back to p. ODE-net: q -> q hidden (tanh), shifted
/// sigmoid layer of width n_eta, diagonal affine output.
struct ModelParams {
    int p = 0;
    int q = 0;
    int latent_dim = 2;
    int n_eta = 2;
    Scenario scenario = Scenario::Linear2;

    LinearLayer enc_hidden, enc_mu, enc_logvar;
    LinearLayer dec_hidden, dec_mean, dec_logvar;
    LinearLayer onet_hidden, onet_param;
    ad::Tensor onet_out_scale;  // diagonal of the output transform
    ad::Tensor onet_out_bias;

    double onet_sigmoid_scale = 1.0;   // 2 for Lotka-Volterra
    double onet_sigmoid_shift = -0.5;  // 0 for Lotka-Volterra (range [0,2])

    /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization; Lotka-Volterra
    /// additionally scales the range by 0.1 to reduce solver instabilities.
    static ModelParams init(Scenario s, int p, int q, std::uint64_t seed);

    std::vector<ad::Tensor*> parameters();
    std::vector<const ad::Tensor*> parameters() const;
    std::vector<std::string> parameter_names() const;

    void save(const std::string& path) const;
    static ModelParams load(const std::string& path);
};

/// The model's tensors registered as leaves on one tape, in parameters() order.
struct TapedParams {
    std::vector<ad::Var> vars;
    const ModelParams* spec = nullptr;

    TapedParams(ad::Tape& tape, const ModelParams& params);
    ad::Var operator[](std::size_t i) const { return vars[i]; }
};

// Indices of parameter groups within parameters() order.
struct ParamGroups {
    static constexpr int kEncoderBegin = 0, kEncoderEnd = 6;
    static constexpr int kDecoderBegin = 6, kDecoderEnd = 12;
    static constexpr int kOdeNetBegin = 12, kOdeNetEnd = 18;
};

// ---- taped forward passes --------------------------------------------------

/// (mu, sigma) for one observation column; sigma = exp(0.5 * logvar) > 0.
std::pair<ad::Var, ad::Var> encode(ad::Tape& tape, const TapedParams& tp,
                                   const std::vector<double>& x);
ad::Var ode_net(ad::Tape& tape, const TapedParams& tp, const std::vector<double>& x_star);
/// (mean, variance) of the Gaussian observation model.
std::pair<ad::Var, ad::Var> decode(const TapedParams& tp, ad::Var z);

/// z = mu_tilde + sigma (elementwise) epsilon.
ad::Var reparam_sample(ad::Var mu_tilde, ad::Var sigma, const std::vector<double>& epsilon);

/// 0.5 * sum(sigma^2 + mu^2 - 1 - log sigma^2), against a standard normal prior.
ad::Var kl_gaussian(ad::Var mu, ad::Var sigma);
double kl_gaussian(const std::vector<double>& mu, const std::vector<double>& sigma);

/// 0.5 * sum(log(2 pi var) + (x - mean)^2 / var).
ad::Var gaussian_nll(const std::vector<double>& x, ad::Var mean, ad::Var variance);
double gaussian_nll(const std::vector<double>& x, const std::vector<double>& mean,
                    const std::vector<double>& variance);

// ---- numeric forward passes (no tape; used for batching and evaluation) ----

std::pair<std::vector<double>, std::vector<double>> encode_numeric(const ModelParams& params,
                                                                   const std::vector<double>& x);
std::vector<double> ode_net_numeric(const ModelParams& params, const std::vector<double>& x_star);

// ---- loss ------------------------------------------------------------------

struct LossBreakdown {
    double total = 0.0;
    double kl_term = 0.0;      // unscaled; total applies the 0.5 factor
    double recon_term = 0.0;   // negative log-likelihood
    double match_term = 0.0;   // unscaled; total applies alpha
    double weight_penalty = 0.0;  // unscaled; total applies 0.01
};

struct LossGraph {
    ad::Var total, kl, recon, match, penalty;
    LossBreakdown breakdown() const;
};

constexpr double kKlFactor = 0.5;
constexpr double kDecoderPenalty = 0.01;

/// One noise draw per latent dimension and time point, in time order.
using NoiseDraw = std::vector<std::vector<double>>;

/// Full per-individual loss of the adapted objective:
/// total = 0.5*kl + recon + alpha*match + 0.01*penalty. Follow-up posterior
/// means are replaced by the ODE solution started from the t0 encoding;
/// K > 2 time points sum reconstruction and match terms over all follow-ups.
LossGraph compute_loss(ad::Tape& tape, const Individual& ind, const TapedParams& tp,
                       const OdeSystem& sys, double alpha, const NoiseDraw& epsilon,
                       const SolverConfig& solver);

}  // namespace odevae
