#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "odevae/evaluate.hpp"

using namespace odevae;

namespace {

std::vector<Trajectory> group_truths(Scenario s) {
    std::vector<double> grid = similarity_grid();
    OdeSystem sys = make_paper_system(s);
    SolverConfig tight;
    tight.abs_tol = tight.rel_tol = 1e-10;
    std::vector<Trajectory> out;
    for (int g = 0; g < 2; ++g)
        out.push_back(solve_grid(sys, paper_group_eta(s, g), paper_initial_state(s), grid, tight));
    return out;
}

double traj_mse(const Trajectory& a, const Trajectory& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.states.size(); ++k)
        for (int d = 0; d < 2; ++d)
            s += std::pow(a.states[k][static_cast<std::size_t>(d)] -
                              b.states[k][static_cast<std::size_t>(d)],
                          2);
    return s / static_cast<double>(a.states.size());
}

}  // namespace

TEST_CASE("fit_alignment recovers synthetic misalignments") {
    std::vector<Trajectory> truth = group_truths(Scenario::Linear2);

    SUBCASE("identity when fitted equals truth") {
        AlignmentMap map = fit_alignment(truth, truth);
        for (std::size_t i = 0; i < truth.size(); ++i)
            CHECK(traj_mse(map.apply(truth[i]), truth[i]) < 1e-20);
        CHECK(map.perm[0] == 0);
        CHECK(map.scale[0] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(map.offset[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
    }
    SUBCASE("negated latent space") {
        std::vector<Trajectory> fitted = truth;
        for (Trajectory& tr : fitted)
            for (Vec2& s : tr.states) {
                s[0] = -s[0];
                s[1] = -s[1];
            }
        AlignmentMap map = fit_alignment(fitted, truth);
        for (std::size_t i = 0; i < truth.size(); ++i)
            CHECK(traj_mse(map.apply(fitted[i]), truth[i]) < 1e-18);
    }
    SUBCASE("swapped, scaled and offset dimensions") {
        std::vector<Trajectory> fitted = truth;
        for (Trajectory& tr : fitted)
            for (Vec2& s : tr.states) s = {3.0 * s[1] - 1.0, -0.5 * s[0] + 2.0};
        AlignmentMap map = fit_alignment(fitted, truth);
        CHECK(map.perm[0] == 1);
        CHECK(map.perm[1] == 0);
        for (std::size_t i = 0; i < truth.size(); ++i)
            CHECK(traj_mse(map.apply(fitted[i]), truth[i]) < 1e-18);
    }
    SUBCASE("alignment residual never exceeds the identity residual") {
        std::mt19937_64 rng(77);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<Trajectory> fitted = truth;
        for (Trajectory& tr : fitted)
            for (Vec2& s : tr.states) {
                s[0] += 0.3 * nd(rng);
                s[1] += 0.3 * nd(rng);
            }
        AlignmentMap map = fit_alignment(fitted, truth);
        double aligned = 0, identity = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            aligned += traj_mse(map.apply(fitted[i]), truth[i]);
            identity += traj_mse(fitted[i], truth[i]);
        }
        CHECK(aligned <= identity + 1e-12);
    }
    SUBCASE("degenerate constant dimension keeps scale 1") {
        std::vector<Trajectory> fitted = truth;
        std::vector<Trajectory> flat = truth;
        for (Trajectory& tr : flat)
            for (Vec2& s : tr.states) s = {1.0, 1.0};
        AlignmentMap map = fit_alignment(flat, flat);
        CHECK(std::isfinite(map.scale[0]));
        CHECK(std::isfinite(map.offset[0]));
    }
}

TEST_CASE("true_trajectory matches the closed form") {
    Individual ind;
    ind.id = 0;
    ind.true_group = 0;
    ind.true_eta = paper_group_eta(Scenario::Linear2, 0);
    std::vector<double> grid = similarity_grid();
    Trajectory tr = true_trajectory(Scenario::Linear2, ind, grid);
    Mat2 A{{{-0.2, 0.0}, {0.0, 0.2}}};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Vec2 want = linear_closed_form(A, {2.0, 1.0}, grid[k]);
        CHECK(tr.states[k][0] == doctest::Approx(want[0]).epsilon(1e-9));
        CHECK(tr.states[k][1] == doctest::Approx(want[1]).epsilon(1e-9));
    }
    Individual no_truth;
    no_truth.id = 1;
    CHECK_THROWS_AS(true_trajectory(Scenario::Linear2, no_truth, grid), std::invalid_argument);
}

TEST_CASE("recovery metrics on synthetic perfect fits") {
    // simulate, then hand evaluate_recovery a model-free shortcut: build the
    // dataset and check the accuracy logic through group_recovery_accuracy on
    // an untrained vs oracle-like setting is covered in the acceptance suite;
    // here we exercise the label convention directly via fit_group_alignment.
    ScenarioConfig cfg = ScenarioConfig::defaults(Scenario::Linear2);
    cfg.n_individuals = 20;
    cfg.seed = 15;
    Dataset ds = simulate(cfg);
    std::vector<double> grid = similarity_grid();

    // fitted = truth: alignment must be near-identity and trends match groups
    std::vector<Trajectory> fitted;
    for (const Individual& ind : ds.individuals)
        fitted.push_back(true_trajectory(Scenario::Linear2, ind, grid));
    AlignmentMap map = fit_group_alignment(ds, fitted, Scenario::Linear2, grid);
    for (std::size_t i = 0; i < fitted.size(); ++i) {
        Trajectory aligned = map.apply(fitted[i]);
        double net = aligned.states.back()[1] - aligned.states.front()[1];
        // group 0 has eta2 = +0.2 (rising u2), group 1 decays
        bool rising = net > 0;
        CHECK(rising == (*ds.individuals[i].true_group == 0));
    }
}

TEST_CASE("recovery accuracy is invariant to latent reparametrization") {
    ScenarioConfig scfg = ScenarioConfig::defaults(Scenario::Linear2);
    scfg.n_individuals = 16;
    scfg.p_timevars = 4;
    scfg.q_baseline = 6;
    scfg.n_informative = 2;
    scfg.seed = 23;
    Dataset ds = simulate(scfg);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig solver;

    ModelParams m = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 3);
    double base = group_recovery_accuracy(ds, m, sys, Scenario::Linear2, solver);
    CHECK(base >= 0.5);
    CHECK(base <= 1.0);

    // flipping the sign of the latent space (negate encoder heads and the
    // decoder/ode-net input weights) must not change the recovery accuracy
    ModelParams flipped = m;
    auto negate = [](ad::Tensor& t) {
        for (int i = 0; i < t.size(); ++i) t[i] = -t[i];
    };
    negate(flipped.enc_mu.W);
    negate(flipped.enc_mu.b);
    negate(flipped.dec_hidden.W);  // decoder consumes the negated z
    double flip = group_recovery_accuracy(ds, flipped, sys, Scenario::Linear2, solver);
    CHECK(flip == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("evaluate_recovery report and csv export") {
    ScenarioConfig scfg = ScenarioConfig::defaults(Scenario::Linear2);
    scfg.n_individuals = 10;
    scfg.p_timevars = 4;
    scfg.q_baseline = 6;
    scfg.n_informative = 2;
    scfg.seed = 29;
    Dataset ds = simulate(scfg);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig solver;
    ModelParams m = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 3);

    RecoveryReport rep = evaluate_recovery(ds, m, sys, Scenario::Linear2, solver);
    CHECK(rep.accuracy >= 0.5);
    CHECK(rep.accuracy <= 1.0);
    CHECK(rep.trend_labels.size() == ds.individuals.size());
    for (int g = 0; g < 2; ++g)
        for (int d = 0; d < 2; ++d) {
            CHECK(std::isfinite(rep.rmse[g][d]));
            CHECK(rep.rmse[g][d] >= 0.0);
        }

    std::string path = "/tmp/odevae_test_recovery.csv";
    rep.export_csv(path);
    FILE* f = std::fopen(path.c_str(), "r");
    REQUIRE(f);
    char line[256] = {};
    REQUIRE(std::fgets(line, sizeof line, f));
    std::fclose(f);
    CHECK(std::string(line).starts_with("metric,value"));
    std::remove(path.c_str());
}

TEST_CASE("trajectory csv export shape") {
    ScenarioConfig scfg = ScenarioConfig::defaults(Scenario::Linear2);
    scfg.n_individuals = 3;
    scfg.p_timevars = 4;
    scfg.q_baseline = 6;
    scfg.n_informative = 2;
    scfg.seed = 33;
    Dataset ds = simulate(scfg);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig solver;
    ModelParams m = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 3);

    std::string path = "/tmp/odevae_test_traj.csv";
    export_trajectories_csv(ds, m, sys, solver, path, 21);
    FILE* f = std::fopen(path.c_str(), "r");
    REQUIRE(f);
    char line[512] = {};
    REQUIRE(std::fgets(line, sizeof line, f));
    CHECK(std::string(line).starts_with("id,t,dim,mu_encoder,mu_smooth"));
    int rows = 0;
    while (std::fgets(line, sizeof line, f)) ++rows;
    std::fclose(f);
    // per individual: 2 observed times x 2 dims encoder rows + 21 x 2 smooth rows
    CHECK(rows == 3 * (2 * 2 + 21 * 2));
    std::remove(path.c_str());
}
