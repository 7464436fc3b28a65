#include "odevae/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csv_util.hpp"

namespace odevae {

namespace csv = csvutil;

Trajectory AlignmentMap::apply(const Trajectory& t) const {
    Trajectory out;
    out.times = t.times;
    out.states.reserve(t.states.size());
    for (const Vec2& s : t.states) out.states.push_back(apply(s));
    return out;
}

namespace {

struct DimFit {
    double scale = 1.0, offset = 0.0, residual = 0.0;
};

// Least-squares y ~ a*x + c over paired samples.
DimFit lsq_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double var = sxx - sx * sx / n;
    DimFit f;
    if (var < 1e-12) {
        // degenerate (constant fitted dimension): keep unit scale
        f.scale = 1.0;
        f.offset = (sy - sx) / n;
    } else {
        f.scale = (sxy - sx * sy / n) / var;
        if (f.scale == 0.0) f.scale = 1.0;
        f.offset = (sy - f.scale * sx) / n;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = f.scale * x[i] + f.offset - y[i];
        f.residual += r * r;
    }
    return f;
}

std::vector<Trajectory> fitted_trajectories(const Dataset& ds, const ModelParams& model,
                                            const OdeSystem& sys, const std::vector<double>& grid,
                                            const SolverConfig& solver) {
    std::vector<Trajectory> out;
    out.reserve(ds.individuals.size());
    for (const Individual& ind : ds.individuals) {
        try {
            out.push_back(fit_trajectory(model, sys, ind, grid, solver));
        } catch (const SolverInstability&) {
            auto [mu0, sig] = encode_numeric(model, ind.observations.front().x);
            (void)sig;
            Trajectory flat;
            flat.times = grid;
            flat.states.assign(grid.size(), Vec2{mu0[0], mu0[1]});
            out.push_back(std::move(flat));
        }
    }
    return out;
}

}  // namespace

AlignmentMap fit_alignment(const std::vector<Trajectory>& fitted,
                           const std::vector<Trajectory>& truth) {
    if (fitted.size() != truth.size() || fitted.empty())
        throw std::invalid_argument("fit_alignment: need equal non-empty trajectory lists");

    AlignmentMap best;
    double best_residual = std::numeric_limits<double>::infinity();
    const std::array<std::array<int, 2>, 2> perms = {{{0, 1}, {1, 0}}};
    for (const auto& perm : perms) {
        for (int sbits = 0; sbits < 4; ++sbits) {
            const std::array<double, 2> sign = {sbits & 1 ? -1.0 : 1.0, sbits & 2 ? -1.0 : 1.0};
            AlignmentMap map;
            map.perm = perm;
            map.sign = sign;
            double residual = 0.0;
            for (int d = 0; d < 2; ++d) {
                std::vector<double> x, y;
                for (std::size_t k = 0; k < fitted.size(); ++k)
                    for (std::size_t i = 0; i < fitted[k].states.size(); ++i) {
                        x.push_back(sign[static_cast<std::size_t>(d)] *
                                    fitted[k].states[i][static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])]);
                        y.push_back(truth[k].states[i][static_cast<std::size_t>(d)]);
                    }
                DimFit f = lsq_fit(x, y);
                map.scale[static_cast<std::size_t>(d)] = f.scale;
                map.offset[static_cast<std::size_t>(d)] = f.offset;
                residual += f.residual;
            }
            if (residual < best_residual) {
                best_residual = residual;
                best = map;
            }
        }
    }
    return best;
}

Trajectory true_trajectory(Scenario s, const Individual& ind, const std::vector<double>& grid) {
    if (!ind.true_group.has_value())
        throw std::invalid_argument("true_trajectory: individual has no ground truth");
    const Vec2 mu0 = paper_initial_state(s);
    Trajectory t;
    t.times = grid;
    if (s == Scenario::LotkaVolterra) {
        static const OdeSystem sys = make_paper_system(Scenario::LotkaVolterra);
        SolverConfig cfg;
        cfg.abs_tol = cfg.rel_tol = 1e-10;
        return solve_grid(sys, ind.true_eta, mu0, grid, cfg);
    }
    Mat2 A;
    if (s == Scenario::Linear2) {
        A = {{{ind.true_eta[0], 0.0}, {0.0, ind.true_eta[1]}}};
    } else {
        A = {{{ind.true_eta[0], ind.true_eta[1]}, {ind.true_eta[2], ind.true_eta[3]}}};
    }
    for (double tt : grid) t.states.push_back(linear_closed_form(A, mu0, tt));
    return t;
}

AlignmentMap fit_group_alignment(const Dataset& ds, const std::vector<Trajectory>& fitted,
                                 Scenario scenario, const std::vector<double>& grid) {
    if (!ds.has_truth()) throw std::invalid_argument("fit_group_alignment: dataset has no ground truth");

    // Group-mean fitted trajectories, to avoid per-individual overfitting of
    // the affine map.
    std::array<Trajectory, 2> mean_fit;
    std::array<int, 2> count = {0, 0};
    std::array<const Individual*, 2> representative = {nullptr, nullptr};
    for (int g = 0; g < 2; ++g) {
        mean_fit[static_cast<std::size_t>(g)].times = grid;
        mean_fit[static_cast<std::size_t>(g)].states.assign(grid.size(), Vec2{0.0, 0.0});
    }
    for (std::size_t k = 0; k < ds.individuals.size(); ++k) {
        const int g = *ds.individuals[k].true_group;
        representative[static_cast<std::size_t>(g)] = &ds.individuals[k];
        ++count[static_cast<std::size_t>(g)];
        for (std::size_t i = 0; i < grid.size(); ++i) {
            mean_fit[static_cast<std::size_t>(g)].states[i][0] += fitted[k].states[i][0];
            mean_fit[static_cast<std::size_t>(g)].states[i][1] += fitted[k].states[i][1];
        }
    }

    std::vector<Trajectory> fit_list, truth_list;
    for (int g = 0; g < 2; ++g) {
        if (count[static_cast<std::size_t>(g)] == 0) continue;
        for (auto& s : mean_fit[static_cast<std::size_t>(g)].states) {
            s[0] /= count[static_cast<std::size_t>(g)];
            s[1] /= count[static_cast<std::size_t>(g)];
        }
        fit_list.push_back(mean_fit[static_cast<std::size_t>(g)]);
        truth_list.push_back(true_trajectory(scenario, *representative[static_cast<std::size_t>(g)], grid));
    }
    return fit_alignment(fit_list, truth_list);
}

RecoveryReport evaluate_recovery(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                                 Scenario scenario, const SolverConfig& solver) {
    if (!ds.has_truth()) throw std::invalid_argument("evaluate_recovery: dataset has no ground truth");
    const std::vector<double> grid = similarity_grid();
    const std::vector<Trajectory> fitted = fitted_trajectories(ds, model, sys, grid, solver);
    const AlignmentMap align = fit_group_alignment(ds, fitted, scenario, grid);

    // Truth trend per group: sign of the u2 net change over the grid.
    std::array<int, 2> group_trend = {0, 0};
    for (int g = 0; g < 2; ++g) {
        for (const Individual& ind : ds.individuals) {
            if (*ind.true_group != g) continue;
            const Trajectory t = true_trajectory(scenario, ind, grid);
            group_trend[static_cast<std::size_t>(g)] =
                t.states.back()[1] - t.states.front()[1] > 0.0 ? 1 : 0;
            break;
        }
    }

    RecoveryReport report;
    int match = 0;
    std::array<std::array<double, 2>, 2> sq_sum = {{{0.0, 0.0}, {0.0, 0.0}}};
    std::array<int, 2> group_count = {0, 0};
    for (std::size_t k = 0; k < ds.individuals.size(); ++k) {
        const Individual& ind = ds.individuals[k];
        const int g = *ind.true_group;
        const Trajectory aligned = align.apply(fitted[k]);
        const int label = aligned.states.back()[1] - aligned.states.front()[1] > 0.0 ? 1 : 0;
        report.trend_labels.push_back(label);
        if (label == group_trend[static_cast<std::size_t>(g)]) ++match;

        const Trajectory truth = true_trajectory(scenario, ind, grid);
        ++group_count[static_cast<std::size_t>(g)];
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (int d = 0; d < 2; ++d) {
                const double r = aligned.states[i][static_cast<std::size_t>(d)] -
                                 truth.states[i][static_cast<std::size_t>(d)];
                sq_sum[static_cast<std::size_t>(g)][static_cast<std::size_t>(d)] += r * r;
            }
    }

    const double frac = static_cast<double>(match) / static_cast<double>(ds.individuals.size());
    report.accuracy = std::max(frac, 1.0 - frac);
    for (int g = 0; g < 2; ++g)
        for (int d = 0; d < 2; ++d)
            report.rmse[static_cast<std::size_t>(g)][static_cast<std::size_t>(d)] =
                group_count[static_cast<std::size_t>(g)] > 0
                    ? std::sqrt(sq_sum[static_cast<std::size_t>(g)][static_cast<std::size_t>(d)] /
                                (group_count[static_cast<std::size_t>(g)] * grid.size()))
                    : 0.0;
    return report;
}

void RecoveryReport::export_csv(const std::string& path) const {
    auto f = csv::open_out(path);
    f << "metric,value\n";
    f << "accuracy," << csv::fmt(accuracy) << "\n";
    for (int g = 0; g < 2; ++g)
        for (int d = 0; d < 2; ++d)
            f << "rmse_group" << g << "_dim" << (d + 1) << ","
              << csv::fmt(rmse[static_cast<std::size_t>(g)][static_cast<std::size_t>(d)]) << "\n";
}

double group_recovery_accuracy(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                               Scenario scenario, const SolverConfig& solver) {
    return evaluate_recovery(ds, model, sys, scenario, solver).accuracy;
}

void export_trajectories_csv(const Dataset& ds, const ModelParams& model, const OdeSystem& sys,
                             const SolverConfig& solver, const std::string& path,
                             int dense_points) {
    auto f = csv::open_out(path);
    f << "id,t,dim,mu_encoder,mu_smooth\n";

    double t_end = 10.0;
    for (const Individual& ind : ds.individuals)
        t_end = std::max(t_end, ind.observations.back().t);
    std::vector<double> dense(static_cast<std::size_t>(dense_points));
    for (int i = 0; i < dense_points; ++i)
        dense[static_cast<std::size_t>(i)] = t_end * i / (dense_points - 1);

    for (const Individual& ind : ds.individuals) {
        for (const Observation& o : ind.observations) {
            auto [mu, sigma] = encode_numeric(model, o.x);
            (void)sigma;
            for (int d = 0; d < 2; ++d)
                f << ind.id << "," << csv::fmt(o.t) << "," << (d + 1) << ","
                  << csv::fmt(mu[static_cast<std::size_t>(d)]) << ",\n";
        }
        try {
            const Trajectory smooth = fit_trajectory(model, sys, ind, dense, solver);
            for (std::size_t i = 0; i < dense.size(); ++i)
                for (int d = 0; d < 2; ++d)
                    f << ind.id << "," << csv::fmt(dense[i]) << "," << (d + 1) << ",,"
                      << csv::fmt(smooth.states[i][static_cast<std::size_t>(d)]) << "\n";
        } catch (const SolverInstability&) {
            // leave only the encoder rows for this individual
        }
    }
}

}  // namespace odevae
