#pragma once

#include <string>
#include <vector>

#include "odevae/model.hpp"
#include "odevae/ode.hpp"

namespace odevae {

/// Symmetric matrix of pairwise latent-trajectory distances.
class DistanceMatrix {
public:
    explicit DistanceMatrix(int n) : n_(n), d_(static_cast<std::size_t>(n) * n, 0.0) {}

    int n() const { return n_; }
    double at(int i, int j) const { return d_[static_cast<std::size_t>(i) * n_ + j]; }
    void set(int i, int j, double v) {
        d_[static_cast<std::size_t>(i) * n_ + j] = v;
        d_[static_cast<std::size_t>(j) * n_ + i] = v;
    }

    void export_csv(const std::string& path) const;

private:
    int n_;
    std::vector<double> d_;
};

struct BatchPlan {
    struct Entry {
        int reference;                // index into the trajectory list
        std::vector<int> members;     // size b, contains reference
        std::vector<double> weights;  // normalized, sum 1
    };
    std::vector<Entry> entries;

    void export_csv(const std::string& path) const;
};

/// Centralized discretized L2 distance: both trajectories must share the same
/// grid; per trajectory and dimension the grid mean is subtracted, then
/// d = sqrt((1/m) * sum_t ||mu_i(t) - mu_j(t)||^2) with m = #points - 1.
double trajectory_distance(const Trajectory& a, const Trajectory& b);

DistanceMatrix distance_matrix(const std::vector<Trajectory>& trajectories);

/// K(d) = (1 - (d/bandwidth)^3)^3 for d < bandwidth, else 0.
double tricube_weight(double d, double bandwidth);

/// Per reference individual, the b-1 nearest trajectories (ties broken by
/// smaller index) with normalized tricube weights. If every member sits at
/// distance >= bandwidth the plan falls back to weight 1 on the reference.
BatchPlan assign_batches(const std::vector<Trajectory>& trajectories, int b, double bandwidth);
BatchPlan assign_batches(const DistanceMatrix& dist, int b, double bandwidth);

/// Weighted sum of member loss nodes, on the members' tape.
ad::Var batch_loss(const std::vector<double>& weights, const std::vector<ad::Var>& member_losses);

/// The 11-point evaluation grid over [0, 10] used for distances.
std::vector<double> similarity_grid();

/// Fitted latent trajectory of one individual under the current model: the t0
/// encoding integrated forward with the ODE-net parameters.
Trajectory fit_trajectory(const ModelParams& params, const OdeSystem& sys, const Individual& ind,
                          const std::vector<double>& grid, const SolverConfig& solver);

}  // namespace odevae
