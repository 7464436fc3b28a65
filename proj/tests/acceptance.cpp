// Acceptance gate: eight criteria, one pass/fail line each, exit 0 iff all
// pass. Every run is fully seeded and deterministic; thresholds are pinned
// here and act as regression gates.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "odevae/evaluate.hpp"
#include "odevae/train.hpp"

using namespace odevae;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- criterion 1: solver vs closed form ------------------------------------

Outcome criterion_solver_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig cfg;  // adaptive, default tolerances
    std::vector<double> grid;
    for (int k = 0; k <= 100; ++k) grid.push_back(0.1 * k);

    double worst = 0.0;
    for (int group = 0; group < 2; ++group) {
        std::vector<double> eta = paper_group_eta(Scenario::Linear2, group);
        Mat2 A{{{eta[0], 0.0}, {0.0, eta[1]}}};
        Vec2 mu0 = paper_initial_state(Scenario::Linear2);
        Trajectory tr = solve_grid(sys, eta, mu0, grid, cfg);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            Vec2 want = linear_closed_form(A, mu0, grid[k]);
            for (int d = 0; d < 2; ++d) {
                double rel = std::abs(tr.states[k][static_cast<std::size_t>(d)] -
                                      want[static_cast<std::size_t>(d)]) /
                             std::abs(want[static_cast<std::size_t>(d)]);
                worst = std::max(worst, rel);
            }
        }
    }
    double secs = now_seconds(t0);
    char buf[128];
    std::snprintf(buf, sizeof buf, "max rel err %.3g (limit 1e-6), %.2fs (limit 1s)", worst, secs);
    return {worst < 1e-6 && secs < 1.0, buf};
}

// ---- criterion 2: gradient integrity ---------------------------------------

Outcome criterion_gradients() {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig sc = ScenarioConfig::defaults(Scenario::Linear2);
    sc.n_individuals = 5;
    sc.p_timevars = 4;
    sc.q_baseline = 6;
    sc.n_informative = 2;
    sc.seed = 61;
    Dataset ds = simulate(sc);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    ModelParams model = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 13);
    SolverConfig solver;
    solver.method = SolverConfig::Method::Rk4Fixed;
    solver.step = 0.1;
    const double alpha = 0.7;
    const NoiseDraw eps = {{0.3, -0.2}, {0.1, 0.5}};

    auto loss_value = [&](const ModelParams& m, const Individual& ind) {
        ad::Tape tape;
        TapedParams tp(tape, m);
        return compute_loss(tape, ind, tp, sys, alpha, eps, solver).total.value().item();
    };

    // worst relative error per parameter group: encoder, decoder, ode-net
    double worst[3] = {0, 0, 0};
    const double h = 1e-6;
    for (const Individual& ind : ds.individuals) {
        ad::Tape tape;
        TapedParams tp(tape, model);
        LossGraph g = compute_loss(tape, ind, tp, sys, alpha, eps, solver);
        ad::GradResult gr = tape.backward(g.total, tp.vars);
        for (std::size_t i = 0; i < gr.grads.size(); ++i) {
            int grp = static_cast<int>(i) < ParamGroups::kEncoderEnd    ? 0
                      : static_cast<int>(i) < ParamGroups::kDecoderEnd ? 1
                                                                       : 2;
            ModelParams pert = model;
            ad::Tensor* t = pert.parameters()[i];
            for (int j = 0; j < t->size(); ++j) {
                (*t)[j] += h;
                double up = loss_value(pert, ind);
                (*t)[j] -= 2 * h;
                double dn = loss_value(pert, ind);
                (*t)[j] += h;
                double fd = (up - dn) / (2 * h);
                double denom = std::max({std::abs(fd), std::abs(gr.grads[i][j]), 1e-6});
                worst[grp] = std::max(worst[grp], std::abs(fd - gr.grads[i][j]) / denom);
            }
        }
    }
    double secs = now_seconds(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "rel err enc %.2g dec %.2g odenet %.2g (limit 1e-4), %.1fs (limit 30s)",
                  worst[0], worst[1], worst[2], secs);
    bool ok = worst[0] < 1e-4 && worst[1] < 1e-4 && worst[2] < 1e-4 && secs < 30.0;
    return {ok, buf};
}

// ---- criterion 3: linear2 recovery -----------------------------------------

struct Linear2Run {
    ModelParams model;
    TrainReport report;
    double accuracy = 0.0;
};

Linear2Run run_linear2_pipeline(std::uint64_t train_seed) {
    ScenarioConfig sc = ScenarioConfig::defaults(Scenario::Linear2);
    sc.seed = 101;
    Dataset ds = simulate(sc);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 20;
    cfg.seed = train_seed;
    Linear2Run run{ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), train_seed), {}, 0.0};
    run.report = train_plain(ds, run.model, sys, cfg);
    run.accuracy = group_recovery_accuracy(ds, run.model, sys, Scenario::Linear2, cfg.solver);
    return run;
}

Outcome criterion_linear2_recovery() {
    auto t0 = std::chrono::steady_clock::now();
    int passed = 0;
    std::string accs;
    for (std::uint64_t seed : {1, 2, 3}) {
        Linear2Run run = run_linear2_pipeline(seed);
        if (run.accuracy >= 0.9) ++passed;
        char b[32];
        std::snprintf(b, sizeof b, "%s%.2f", accs.empty() ? "" : "/", run.accuracy);
        accs += b;
    }
    double secs = now_seconds(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "accuracy %s (limit 0.9, need 2 of 3 seeds), %.1fs (limit 300s)",
                  accs.c_str(), secs);
    return {passed >= 2 && secs < 300.0, buf};
}

// ---- criterion 4: Lotka-Volterra sanity ------------------------------------

double group_mean_rmse(const Dataset& ds, const ModelParams& m, const OdeSystem& sys, Scenario sc) {
    SolverConfig solver;
    std::vector<double> grid = similarity_grid();
    std::vector<Trajectory> fitted;
    for (const Individual& ind : ds.individuals) {
        try {
            fitted.push_back(fit_trajectory(m, sys, ind, grid, solver));
        } catch (const SolverInstability&) {
            auto [mu0, sig] = encode_numeric(m, ind.observations.front().x);
            (void)sig;
            Trajectory flat;
            flat.times = grid;
            flat.states.assign(grid.size(), Vec2{mu0[0], mu0[1]});
            fitted.push_back(std::move(flat));
        }
    }
    AlignmentMap map = fit_group_alignment(ds, fitted, sc, grid);
    SolverConfig tight;
    tight.abs_tol = tight.rel_tol = 1e-10;
    double err = 0;
    int cnt = 0;
    for (int g = 0; g < 2; ++g) {
        std::vector<Vec2> mean(grid.size(), Vec2{0, 0});
        int n = 0;
        for (std::size_t i = 0; i < fitted.size(); ++i) {
            if (*ds.individuals[i].true_group != g) continue;
            Trajectory a = map.apply(fitted[i]);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                mean[k][0] += a.states[k][0];
                mean[k][1] += a.states[k][1];
            }
            ++n;
        }
        Trajectory truth =
            solve_grid(sys, paper_group_eta(sc, g), paper_initial_state(sc), grid, tight);
        for (std::size_t k = 0; k < grid.size(); ++k)
            for (int d = 0; d < 2; ++d) {
                double e = mean[k][static_cast<std::size_t>(d)] / n -
                           truth.states[k][static_cast<std::size_t>(d)];
                err += e * e;
                ++cnt;
            }
    }
    return std::sqrt(err / cnt);
}

Outcome criterion_lotka_volterra() {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig sc = ScenarioConfig::defaults(Scenario::LotkaVolterra);
    sc.seed = 201;
    Dataset ds = simulate(sc);
    OdeSystem sys = make_paper_system(Scenario::LotkaVolterra);
    ModelParams init = ModelParams::init(Scenario::LotkaVolterra, ds.p(), ds.q(), 1);
    ModelParams trained = init;
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 1;
    TrainReport report = train_plain(ds, trained, sys, cfg);
    double skip_frac =
        static_cast<double>(report.total_skips) / static_cast<double>(report.total_samples);
    double rmse_init = group_mean_rmse(ds, init, sys, Scenario::LotkaVolterra);
    double rmse_trained = group_mean_rmse(ds, trained, sys, Scenario::LotkaVolterra);
    double secs = now_seconds(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "skip fraction %.3f (limit 0.2), rmse %.3f -> %.3f (must drop), %.1fs (limit 900s)",
                  skip_frac, rmse_init, rmse_trained, secs);
    return {skip_frac < 0.2 && rmse_trained < rmse_init && secs < 900.0, buf};
}

// ---- criterion 5: similarity batching ordering -----------------------------

Outcome criterion_similarity_batching() {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig sc = ScenarioConfig::defaults(Scenario::Linear4);
    sc.seed = 301;
    Dataset ds = simulate(sc);
    OdeSystem sys = make_paper_system(Scenario::Linear4);

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 1;
    cfg.learning_rate = 3e-4;
    cfg.use_similarity_batching = true;
    cfg.batch_size = 10;
    cfg.bandwidth = 1.0;

    ModelParams m_sim = ModelParams::init(Scenario::Linear4, ds.p(), ds.q(), 1);
    TrainReport r_sim = train_similarity(ds, m_sim, sys, cfg);
    TrainConfig cfg_rand = cfg;
    cfg_rand.random_batches = true;
    ModelParams m_rand = ModelParams::init(Scenario::Linear4, ds.p(), ds.q(), 1);
    TrainReport r_rand = train_similarity(ds, m_rand, sys, cfg_rand);

    // batch purity of the final similarity plan
    SolverConfig solver;
    std::vector<Trajectory> trajectories;
    for (const Individual& ind : ds.individuals)
        trajectories.push_back(fit_trajectory(m_sim, sys, ind, similarity_grid(), solver));
    BatchPlan plan = assign_batches(trajectories, cfg.batch_size, cfg.bandwidth);
    double purity = 0;
    for (const BatchPlan::Entry& e : plan.entries) {
        int same = 0;
        for (int m : e.members)
            if (*ds.individuals[static_cast<std::size_t>(m)].true_group ==
                *ds.individuals[static_cast<std::size_t>(e.reference)].true_group)
                ++same;
        purity += static_cast<double>(same) / static_cast<double>(e.members.size());
    }
    purity /= static_cast<double>(plan.entries.size());

    double loss_sim = r_sim.epochs.back().total;
    double loss_rand = r_rand.epochs.back().total;
    double secs = now_seconds(t0);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "final loss sim %.4f vs random %.4f (sim must be lower), purity %.3f (limit "
                  "0.75), %.1fs (limit 1200s)",
                  loss_sim, loss_rand, purity, secs);
    return {loss_sim < loss_rand && purity > 0.75 && secs < 1200.0, buf};
}

// ---- criterion 6: similarity units -----------------------------------------

Outcome criterion_similarity_units() {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> grid = similarity_grid();
    bool ok = true;

    // constant-offset trajectories at distance 0 after centering
    Trajectory a, b;
    a.times = b.times = grid;
    for (double t : grid) {
        a.states.push_back({std::sin(t), 0.2 * t});
        b.states.push_back({std::sin(t) + 4.0, 0.2 * t - 2.0});
    }
    double offset_d = trajectory_distance(a, b);
    ok = ok && offset_d < 1e-12;

    // matrix symmetry / zero diagonal, weights normalized
    std::vector<Trajectory> trs = {a, b};
    for (int i = 0; i < 6; ++i) {
        Trajectory t;
        t.times = grid;
        for (double tv : grid) t.states.push_back({0.1 * i * tv, std::cos(tv + i)});
        trs.push_back(t);
    }
    DistanceMatrix d = distance_matrix(trs);
    for (int i = 0; i < d.n() && ok; ++i) {
        ok = ok && d.at(i, i) == 0.0;
        for (int j = 0; j < d.n(); ++j) ok = ok && d.at(i, j) == d.at(j, i);
    }
    BatchPlan plan = assign_batches(d, 4, 50.0);
    double worst_sum = 0;
    for (const BatchPlan::Entry& e : plan.entries) {
        double s = 0;
        for (double w : e.weights) s += w;
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    ok = ok && worst_sum < 1e-12;

    double secs = now_seconds(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "offset distance %.1g, weight-sum dev %.1g (limit 1e-12), %.2fs (limit 1s)",
                  offset_d, worst_sum, secs);
    return {ok && secs < 1.0, buf};
}

// ---- criterion 7: runtime scaling ------------------------------------------

Outcome criterion_runtime_scaling() {
    auto time_run = [](int n) {
        ScenarioConfig sc = ScenarioConfig::defaults(Scenario::Linear2);
        sc.n_individuals = n;
        sc.seed = 401;
        Dataset ds = simulate(sc);
        OdeSystem sys = make_paper_system(Scenario::Linear2);
        ModelParams model = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 1);
        TrainConfig cfg;
        cfg.epochs = 20;
        cfg.seed = 1;
        return train_plain(ds, model, sys, cfg).seconds;
    };
    // one warmup keeps cold-cache noise out of the small measurement
    (void)time_run(100);
    double t100 = time_run(100);
    double t500 = time_run(500);
    double ratio = t500 / t100;
    char buf[128];
    std::snprintf(buf, sizeof buf, "t(500)/t(100) = %.2fs/%.2fs = %.2f (limits [3, 8])", t500,
                  t100, ratio);
    return {ratio >= 3.0 && ratio <= 8.0, buf};
}

// ---- criterion 8: determinism ----------------------------------------------

Outcome criterion_determinism() {
    auto artifacts = [](const std::string& tag) {
        Linear2Run run = run_linear2_pipeline(1);
        std::string ckpt = "/tmp/odevae_accept_" + tag + ".ckpt";
        std::string rep = "/tmp/odevae_accept_" + tag + ".csv";
        run.model.save(ckpt);
        run.report.export_csv(rep);
        return std::pair{read_file(ckpt), read_file(rep)};
    };
    auto [ckpt_a, rep_a] = artifacts("a");
    auto [ckpt_b, rep_b] = artifacts("b");
    bool ok = !ckpt_a.empty() && ckpt_a == ckpt_b && rep_a == rep_b;
    return {ok, ok ? "checkpoints and reports byte-identical across equal-seed runs"
                   : "equal-seed runs produced different artifacts"};
}

}  // namespace

int main() {
    struct Entry {
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> criteria = {
        {"solver-oracle equivalence", criterion_solver_oracle},
        {"gradient integrity", criterion_gradients},
        {"linear2 group recovery", criterion_linear2_recovery},
        {"lotka-volterra sanity", criterion_lotka_volterra},
        {"similarity-batching ordering", criterion_similarity_batching},
        {"similarity-unit correctness", criterion_similarity_units},
        {"runtime scaling shape", criterion_runtime_scaling},
        {"determinism", criterion_determinism},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %zu: %s — %s\n", out.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failed;
    }
    if (failed > 0) std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
