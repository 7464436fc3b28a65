#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odevae/model.hpp"
#include "odevae/similarity.hpp"

namespace odevae {

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 20;
    double alpha = 1.0;
    int batch_size = 10;       // similarity batching only
    double bandwidth = 1.0;    // tricube kernel bandwidth
    bool use_similarity_batching = false;
    bool random_batches = false;  // ablation: shuffled assignment, uniform weights
    std::uint64_t seed = 1;
    SolverConfig solver;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::string checkpoint_prefix;

    void validate() const;
};

/// Bias-corrected ADAM accumulators, one moment pair per parameter tensor.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;

    static AdamState init(const ModelParams& params);
};

void adam_step(std::vector<ad::Tensor*> params, const std::vector<ad::Tensor>& grads,
               AdamState& state, double lr);

struct EpochStats {
    int epoch = 0;
    double total = 0.0, kl = 0.0, recon = 0.0, match = 0.0, penalty = 0.0;
    int skips = 0;  // samples skipped due to solver instability
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int total_skips = 0;
    int total_samples = 0;
    double seconds = 0.0;

    void export_csv(const std::string& path) const;
};

/// Per-individual SGD over the adapted loss, seeded-shuffled order each epoch.
TrainReport train_plain(const Dataset& ds, ModelParams& model, const OdeSystem& sys,
                        const TrainConfig& cfg);

/// Iterative scheme: per epoch, refit all latent trajectories, rebuild the
/// batch plan, then update on tricube-weighted batch losses per reference
/// individual.
TrainReport train_similarity(const Dataset& ds, ModelParams& model, const OdeSystem& sys,
                             const TrainConfig& cfg);

}  // namespace odevae
