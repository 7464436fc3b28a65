// Microbenchmarks for the hot paths: ODE solves, taped loss + backward, the
// pairwise distance matrix, and one full training epoch.
//
//   cmake --build build --target odevae_bench && ./build/benchmarks/odevae_bench

#include <benchmark/benchmark.h>

#include "odevae/train.hpp"

using namespace odevae;

namespace {

Dataset bench_dataset(int n) {
    ScenarioConfig cfg = ScenarioConfig::defaults(Scenario::Linear2);
    cfg.n_individuals = n;
    cfg.seed = 9001;
    return simulate(cfg);
}

void bm_solve_adaptive(benchmark::State& state) {
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig cfg;
    std::vector<double> eta = paper_group_eta(Scenario::Linear2, 0);
    Vec2 mu0 = paper_initial_state(Scenario::Linear2);
    for (auto _ : state)
        benchmark::DoNotOptimize(solve_at_numeric(sys, eta, mu0, 0.0, 10.0, cfg));
}
BENCHMARK(bm_solve_adaptive);

void bm_solve_rk4_taped(benchmark::State& state) {
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    SolverConfig cfg;
    cfg.method = SolverConfig::Method::Rk4Fixed;
    cfg.step = 0.1;
    for (auto _ : state) {
        ad::Tape tape;
        ad::Var eta = tape.leaf(ad::Tensor({2}, {-0.2, 0.2}));
        ad::Var mu0 = tape.leaf(ad::Tensor({2}, {2.0, 1.0}));
        ad::Var y = solve_at(sys, eta, mu0, 0.0, 10.0, cfg);
        benchmark::DoNotOptimize(tape.backward(ad::sum(ad::square(y)), {eta, mu0}));
    }
}
BENCHMARK(bm_solve_rk4_taped);

void bm_loss_backward(benchmark::State& state) {
    Dataset ds = bench_dataset(1);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    ModelParams model = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 1);
    SolverConfig solver;
    NoiseDraw eps(ds.individuals[0].observations.size(), std::vector<double>{0.1, -0.3});
    for (auto _ : state) {
        ad::Tape tape;
        TapedParams tp(tape, model);
        LossGraph g = compute_loss(tape, ds.individuals[0], tp, sys, 1.0, eps, solver);
        benchmark::DoNotOptimize(tape.backward(g.total, tp.vars));
    }
}
BENCHMARK(bm_loss_backward);

void bm_distance_matrix(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Dataset ds = bench_dataset(n);
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    ModelParams model = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 1);
    SolverConfig solver;
    std::vector<Trajectory> trs;
    for (const Individual& ind : ds.individuals)
        trs.push_back(fit_trajectory(model, sys, ind, similarity_grid(), solver));
    for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(trs));
}
BENCHMARK(bm_distance_matrix)->Arg(100)->Arg(500);

void bm_train_epoch(benchmark::State& state) {
    Dataset ds = bench_dataset(static_cast<int>(state.range(0)));
    OdeSystem sys = make_paper_system(Scenario::Linear2);
    TrainConfig cfg;
    cfg.epochs = 1;
    for (auto _ : state) {
        ModelParams model = ModelParams::init(Scenario::Linear2, ds.p(), ds.q(), 1);
        benchmark::DoNotOptimize(train_plain(ds, model, sys, cfg));
    }
}
BENCHMARK(bm_train_epoch)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
