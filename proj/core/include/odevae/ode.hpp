#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "odevae/tape.hpp"

namespace odevae {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/// Thrown when the numerical solution blows up or exhausts the step budget.
/// Carries the ODE parameters of the failing solve.
struct SolverInstability : std::runtime_error {
    std::vector<double> eta;
    SolverInstability(const std::string& msg, std::vector<double> eta_values)
        : std::runtime_error(msg), eta(std::move(eta_values)) {}
};

struct SolverConfig {
    enum class Method { Rk4Fixed, Adaptive54 };
    Method method = Method::Adaptive54;
    double step = 0.1;        // Rk4Fixed only
    double abs_tol = 1e-6;    // Adaptive54 only
    double rel_tol = 1e-6;    // Adaptive54 only
    int max_steps = 100000;
    double blowup_threshold = 1e6;

    void validate() const;
};

/// The paper's three simulation scenarios.
enum class Scenario { Linear2, LotkaVolterra, Linear4 };

Scenario scenario_from_string(const std::string& name);
std::string scenario_name(Scenario s);

/// Parametrized right-hand side F(state, t, eta) on a 2-dimensional state,
/// with both a tape-recorded and a plain-double evaluation path.
struct OdeSystem {
    enum class Kind { Linear2x2, LotkaVolterra, Generic };
    Kind kind = Kind::Generic;
    int n_free_params = 2;
    std::vector<double> fixed_params;
    std::function<ad::Var(ad::Var state, double t, ad::Var eta)> rhs;
    std::function<Vec2(const Vec2& state, double t, const std::vector<double>& eta)> rhs_numeric;
};

struct Trajectory {
    std::vector<double> times;  // strictly increasing
    std::vector<Vec2> states;
};

/// Integrates the system from t0 to t1 with every arithmetic step recorded on
/// the tape of eta/mu0, so gradients flow to both. t1 == t0 returns mu0.
ad::Var solve_at(const OdeSystem& sys, ad::Var eta, ad::Var mu0, double t0, double t1,
                 const SolverConfig& cfg);

/// One integration pass evaluated at every grid point; grid must be
/// non-decreasing (repeated times share a state).
std::vector<ad::Var> solve_grid_taped(const OdeSystem& sys, ad::Var eta, ad::Var mu0,
                                      const std::vector<double>& times, const SolverConfig& cfg);

// Plain-double paths for simulation, batching and evaluation.
Vec2 solve_at_numeric(const OdeSystem& sys, const std::vector<double>& eta, const Vec2& mu0,
                      double t0, double t1, const SolverConfig& cfg);
Trajectory solve_grid(const OdeSystem& sys, const std::vector<double>& eta, const Vec2& mu0,
                      const std::vector<double>& times, const SolverConfig& cfg);

/// exp(tA) * mu0 for a constant 2x2 matrix; test oracle and data generation
/// cross-check only.
Vec2 linear_closed_form(const Mat2& A, const Vec2& mu0, double t);

/// The scenario systems: Linear2 frees the two diagonal entries of a 2x2
/// matrix, Linear4 frees all four entries (row-major eta), LotkaVolterra frees
/// (a, b) in du1 = a*u1 - u1*u2, du2 = u1*u2 - b*u1 with the interaction
/// coefficients fixed at 1.
OdeSystem make_paper_system(Scenario s);

/// True initial latent state of the scenario.
Vec2 paper_initial_state(Scenario s);

/// True ODE parameters of group 0 or 1 in the scenario.
std::vector<double> paper_group_eta(Scenario s, int group);

}  // namespace odevae
