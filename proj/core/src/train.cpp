#include "odevae/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "csv_util.hpp"

namespace odevae {

using ad::Tensor;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (bandwidth <= 0.0) throw std::invalid_argument("TrainConfig: bandwidth must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("TrainConfig: alpha must be in [0,1]");
    solver.validate();
}

AdamState AdamState::init(const ModelParams& params) {
    AdamState s;
    for (const Tensor* t : params.parameters()) {
        s.m.push_back(Tensor::zeros(t->shape()));
        s.v.push_back(Tensor::zeros(t->shape()));
    }
    return s;
}

void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (int i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void TrainReport::export_csv(const std::string& path) const {
    auto f = csvutil::open_out(path);
    f << "epoch,total,kl,recon,match,penalty,skips\n";
    for (const EpochStats& e : epochs)
        f << e.epoch << "," << csvutil::fmt(e.total) << "," << csvutil::fmt(e.kl) << ","
          << csvutil::fmt(e.recon) << "," << csvutil::fmt(e.match) << "," << csvutil::fmt(e.penalty)
          << "," << e.skips << "\n";
}

namespace {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    // splitmix64 over (master, stream)
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

NoiseDraw draw_noise(std::mt19937_64& rng, std::size_t n_timepoints, int latent_dim) {
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    NoiseDraw eps(n_timepoints);
    for (auto& e : eps) {
        e.resize(static_cast<std::size_t>(latent_dim));
        for (double& x : e) x = stdnorm(rng);
    }
    return eps;
}

void check_params_finite(const ModelParams& model) {
    for (const Tensor* t : model.parameters())
        if (!t->all_finite())
            throw std::runtime_error("training produced non-finite model parameters");
}

void maybe_checkpoint(const ModelParams& model, const TrainConfig& cfg, int epoch) {
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        epoch % cfg.checkpoint_every == 0)
        model.save(cfg.checkpoint_prefix + "_epoch" + std::to_string(epoch) + ".ckpt");
}

struct StatAccum {
    double total = 0, kl = 0, recon = 0, match = 0, penalty = 0;
    int count = 0;

    void add(const LossBreakdown& b) {
        total += b.total;
        kl += b.kl_term;
        recon += b.recon_term;
        match += b.match_term;
        penalty += b.weight_penalty;
        ++count;
    }
    EpochStats finish(int epoch, int skips) const {
        EpochStats e;
        e.epoch = epoch;
        if (count > 0) {
            e.total = total / count;
            e.kl = kl / count;
            e.recon = recon / count;
            e.match = match / count;
            e.penalty = penalty / count;
        }
        e.skips = skips;
        return e;
    }
};

}  // namespace

TrainReport train_plain(const Dataset& ds, ModelParams& model, const OdeSystem& sys,
                        const TrainConfig& cfg) {
    cfg.validate();
    if (ds.individuals.empty()) throw std::invalid_argument("train_plain: empty dataset");
    const auto t_start = std::chrono::steady_clock::now();

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1));
    std::mt19937_64 eps_rng(derive_seed(cfg.seed, 2));
    AdamState adam = AdamState::init(model);

    TrainReport report;
    std::vector<std::size_t> order(ds.individuals.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        StatAccum stats;
        int skips = 0;
        for (std::size_t idx : order) {
            const Individual& ind = ds.individuals[idx];
            NoiseDraw eps = draw_noise(eps_rng, ind.observations.size(), model.latent_dim);
            ad::Tape tape;
            TapedParams tp(tape, model);
            try {
                LossGraph g = compute_loss(tape, ind, tp, sys, cfg.alpha, eps, cfg.solver);
                ad::GradResult gr = tape.backward(g.total, tp.vars);
                adam_step(model.parameters(), gr.grads, adam, cfg.learning_rate);
                check_params_finite(model);
                stats.add(g.breakdown());
            } catch (const SolverInstability&) {
                ++skips;
            }
            ++report.total_samples;
        }
        report.epochs.push_back(stats.finish(epoch, skips));
        report.total_skips += skips;
        maybe_checkpoint(model, cfg, epoch);
    }

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

TrainReport train_similarity(const Dataset& ds, ModelParams& model, const OdeSystem& sys,
                             const TrainConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(ds.individuals.size());
    if (n == 0) throw std::invalid_argument("train_similarity: empty dataset");
    if (cfg.batch_size > n) throw std::invalid_argument("train_similarity: batch_size exceeds n");
    const auto t_start = std::chrono::steady_clock::now();

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1));
    std::mt19937_64 eps_rng(derive_seed(cfg.seed, 2));
    AdamState adam = AdamState::init(model);
    const std::vector<double> grid = similarity_grid();

    TrainReport report;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Step 1: refit trajectories with the current parameters and build the plan.
        std::vector<Trajectory> trajectories;
        trajectories.reserve(static_cast<std::size_t>(n));
        for (const Individual& ind : ds.individuals) {
            try {
                trajectories.push_back(fit_trajectory(model, sys, ind, grid, cfg.solver));
            } catch (const SolverInstability&) {
                // Unstable fit: stand in a constant trajectory at the t0
                // encoding; centralization maps it to zero development.
                auto [mu0, sig] = encode_numeric(model, ind.observations.front().x);
                (void)sig;
                Trajectory flat;
                flat.times = grid;
                flat.states.assign(grid.size(), Vec2{mu0[0], mu0[1]});
                trajectories.push_back(std::move(flat));
            }
        }

        BatchPlan plan;
        if (cfg.random_batches) {
            for (int i = 0; i < n; ++i) {
                std::vector<int> others;
                for (int j = 0; j < n; ++j)
                    if (j != i) others.push_back(j);
                std::shuffle(others.begin(), others.end(), shuffle_rng);
                BatchPlan::Entry e;
                e.reference = i;
                e.members.push_back(i);
                for (int k = 0; k < cfg.batch_size - 1; ++k) e.members.push_back(others[static_cast<std::size_t>(k)]);
                e.weights.assign(e.members.size(), 1.0 / static_cast<double>(cfg.batch_size));
                plan.entries.push_back(std::move(e));
            }
        } else {
            plan = assign_batches(trajectories, cfg.batch_size, cfg.bandwidth);
        }

        // Step 2: one update per reference individual, shuffled order.
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        StatAccum stats;
        int skips = 0;
        for (int ref : order) {
            const BatchPlan::Entry& entry = plan.entries[static_cast<std::size_t>(ref)];
            ad::Tape tape;
            TapedParams tp(tape, model);
            std::vector<ad::Var> losses;
            std::vector<double> weights;
            LossBreakdown ref_breakdown{};
            for (std::size_t k = 0; k < entry.members.size(); ++k) {
                const Individual& ind = ds.individuals[static_cast<std::size_t>(entry.members[k])];
                NoiseDraw eps = draw_noise(eps_rng, ind.observations.size(), model.latent_dim);
                try {
                    LossGraph g = compute_loss(tape, ind, tp, sys, cfg.alpha, eps, cfg.solver);
                    losses.push_back(g.total);
                    weights.push_back(entry.weights[k]);
                    if (entry.members[k] == entry.reference) ref_breakdown = g.breakdown();
                } catch (const SolverInstability&) {
                    ++skips;  // drop the offending member, keep the batch
                }
                ++report.total_samples;
            }
            if (losses.empty()) continue;
            const double mass = std::accumulate(weights.begin(), weights.end(), 0.0);
            if (mass <= 0.0) continue;
            for (double& w : weights) w /= mass;

            ad::Var total = batch_loss(weights, losses);
            ad::GradResult gr = tape.backward(total, tp.vars);
            adam_step(model.parameters(), gr.grads, adam, cfg.learning_rate);
            check_params_finite(model);
            LossBreakdown b = ref_breakdown;
            b.total = total.value().item();
            stats.add(b);
        }
        report.epochs.push_back(stats.finish(epoch, skips));
        report.total_skips += skips;
        maybe_checkpoint(model, cfg, epoch);
    }

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace odevae
