#include "odevae/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csv_util.hpp"

namespace odevae {

namespace csv = csvutil;

void DistanceMatrix::export_csv(const std::string& path) const {
    auto f = csv::open_out(path);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) f << (j ? "," : "") << csv::fmt(at(i, j));
        f << "\n";
    }
}

void BatchPlan::export_csv(const std::string& path) const {
    auto f = csv::open_out(path);
    f << "reference,member,weight\n";
    for (const Entry& e : entries)
        for (std::size_t k = 0; k < e.members.size(); ++k)
            f << e.reference << "," << e.members[k] << "," << csv::fmt(e.weights[k]) << "\n";
}

namespace {

// Per-dimension grid means subtracted; returns flattened centered values.
std::vector<double> centered(const Trajectory& t) {
    const std::size_t m = t.states.size();
    double mean0 = 0.0, mean1 = 0.0;
    for (const Vec2& s : t.states) {
        mean0 += s[0];
        mean1 += s[1];
    }
    mean0 /= static_cast<double>(m);
    mean1 /= static_cast<double>(m);
    std::vector<double> out;
    out.reserve(2 * m);
    for (const Vec2& s : t.states) {
        out.push_back(s[0] - mean0);
        out.push_back(s[1] - mean1);
    }
    return out;
}

}  // namespace

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
    if (a.times.size() != b.times.size())
        throw std::invalid_argument("trajectory_distance: grid size mismatch");
    for (std::size_t i = 0; i < a.times.size(); ++i)
        if (a.times[i] != b.times[i])
            throw std::invalid_argument("trajectory_distance: grids differ");
    if (a.times.size() < 2) throw std::invalid_argument("trajectory_distance: need >= 2 grid points");

    const std::vector<double> ca = centered(a);
    const std::vector<double> cb = centered(b);
    double s = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        const double d = ca[i] - cb[i];
        s += d * d;
    }
    const double m = static_cast<double>(a.times.size() - 1);
    return std::sqrt(s / m);
}

DistanceMatrix distance_matrix(const std::vector<Trajectory>& trajectories) {
    const int n = static_cast<int>(trajectories.size());
    DistanceMatrix d(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            d.set(i, j, trajectory_distance(trajectories[static_cast<std::size_t>(i)],
                                            trajectories[static_cast<std::size_t>(j)]));
    return d;
}

double tricube_weight(double d, double bandwidth) {
    if (bandwidth <= 0.0) throw std::invalid_argument("tricube_weight: bandwidth must be positive");
    if (d >= bandwidth) return 0.0;
    const double u = d / bandwidth;
    const double w = 1.0 - u * u * u;
    return w * w * w;
}

BatchPlan assign_batches(const DistanceMatrix& dist, int b, double bandwidth) {
    const int n = dist.n();
    if (b < 1 || b > n) throw std::invalid_argument("assign_batches: need 1 <= b <= n");

    BatchPlan plan;
    for (int i = 0; i < n; ++i) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        // reference first, then by distance; ties broken by smaller index
        std::sort(order.begin(), order.end(), [&](int a, int c) {
            if (a == i) return true;
            if (c == i) return false;
            const double da = dist.at(i, a), dc = dist.at(i, c);
            if (da != dc) return da < dc;
            return a < c;
        });

        BatchPlan::Entry e;
        e.reference = i;
        e.members.assign(order.begin(), order.begin() + b);
        double mass = 0.0;
        for (int m : e.members) {
            const double w = tricube_weight(dist.at(i, m), bandwidth);
            e.weights.push_back(w);
            mass += w;
        }
        if (mass <= 0.0) {
            // All members beyond the kernel support; degrade to unbatched.
            for (std::size_t k = 0; k < e.members.size(); ++k)
                e.weights[k] = e.members[k] == i ? 1.0 : 0.0;
        } else {
            for (double& w : e.weights) w /= mass;
        }
        plan.entries.push_back(std::move(e));
    }
    return plan;
}

BatchPlan assign_batches(const std::vector<Trajectory>& trajectories, int b, double bandwidth) {
    return assign_batches(distance_matrix(trajectories), b, bandwidth);
}

ad::Var batch_loss(const std::vector<double>& weights, const std::vector<ad::Var>& member_losses) {
    if (weights.size() != member_losses.size() || weights.empty())
        throw std::invalid_argument("batch_loss: weights and losses must match and be non-empty");
    ad::Var total = scale(member_losses[0], weights[0]);
    for (std::size_t k = 1; k < weights.size(); ++k)
        total = add(total, scale(member_losses[k], weights[k]));
    return total;
}

std::vector<double> similarity_grid() {
    std::vector<double> grid(11);
    for (int i = 0; i <= 10; ++i) grid[static_cast<std::size_t>(i)] = static_cast<double>(i);
    return grid;
}

Trajectory fit_trajectory(const ModelParams& params, const OdeSystem& sys, const Individual& ind,
                          const std::vector<double>& grid, const SolverConfig& solver) {
    auto [mu0, sigma0] = encode_numeric(params, ind.observations.front().x);
    (void)sigma0;
    const std::vector<double> eta = ode_net_numeric(params, ind.baseline);
    return solve_grid(sys, eta, Vec2{mu0[0], mu0[1]}, grid, solver);
}

}  // namespace odevae
