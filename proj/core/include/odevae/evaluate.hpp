#pragma once

#include <array>
#include <string>
#include <vector>

#include "odevae/model.hpp"
#include "odevae/similarity.hpp"

namespace odevae {

/// Permutation / sign / per-dimension affine transform reconciling the model's
/// arbitrary latent coordinates with the ground-truth ones.
struct AlignmentMap {
    std::array<int, 2> perm = {0, 1};      // output dim d reads fitted dim perm[d]
    std::array<double, 2> sign = {1.0, 1.0};
    std::array<double, 2> scale = {1.0, 1.0};
    std::array<double, 2> offset = {0.0, 0.0};

    Vec2 apply(const Vec2& state) const {
        Vec2 out;
        for (int d = 0; d < 2; ++d)
            out[static_cast<std::size_t>(d)] =
                scale[static_cast<std::size_t>(d)] * sign[static_cast<std::size_t>(d)] *
                    state[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])] +
                offset[static_cast<std::size_t>(d)];
        return out;
    }
    Trajectory apply(const Trajectory& t) const;
};

/// Exhaustive search over 2 permutations x 4 sign patterns with per-dimension
/// least-squares scale/offset, minimizing total squared error of fitted
/// against truth over all paired trajectories.
AlignmentMap fit_alignment(const std::vector<Trajectory>& fitted,
                           const std::vector<Trajectory>& truth);

struct RecoveryReport {
    double accuracy = 0.0;
    // group x latent dimension
    std::array<std::array<double, 2>, 2> rmse = {{{0.0, 0.0}, {0.0, 0.0}}};
    std::vector<int> trend_labels;  // per individual: 1 if aligned dim-2 rises over [0,10]

    void export_csv(const std::string& path) const;
};

/// Ground-truth latent trajectory of one simulated individual on a grid.
Trajectory true_trajectory(Scenario s, const Individual& ind, const std::vector<double>& grid);

/// Alignment fitted on group-mean trajectories, then applied to all
/// individuals; requires ground-truth groups.
AlignmentMap fit_group_alignment(const Dataset& ds, const std::vector<Trajectory>& fitted,
                                 Scenario scenario, const std::vector<double>& grid);

/// Fraction of individuals whose aligned second-latent-dimension trend
/// (sign of the net change over the grid) matches their group, maximized over
/// the two label-to-group assignments.
double group_recovery_accuracy(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                               Scenario scenario, const SolverConfig& solver);

/// Full recovery metrics; fitted trajectories are computed on the 11-point
/// grid and aligned before comparison.
RecoveryReport evaluate_recovery(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                                 Scenario scenario, const SolverConfig& solver);

/// Long-format trajectory export (id,t,dim,mu_encoder,mu_smooth): encoder
/// means at observed times plus smooth ODE-solution curves on a dense grid.
void export_trajectories_csv(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                             const SolverConfig& solver, const std::string& path,
                             int dense_points = 101);

}  // namespace odevae
