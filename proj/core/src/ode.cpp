#include "odevae/ode.hpp"

#include <algorithm>
#include <cmath>

namespace odevae {

using ad::Tensor;
using ad::Var;
using ad::concat;
using ad::reshape;

void SolverConfig::validate() const {
    if (method == Method::Rk4Fixed && step <= 0.0)
        throw std::invalid_argument("SolverConfig: step must be positive");
    if (method == Method::Adaptive54 && (abs_tol <= 0.0 || rel_tol <= 0.0))
        throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (max_steps < 1) throw std::invalid_argument("SolverConfig: max_steps must be >= 1");
    if (blowup_threshold <= 0.0)
        throw std::invalid_argument("SolverConfig: blowup_threshold must be positive");
}

Scenario scenario_from_string(const std::string& name) {
    if (name == "linear2") return Scenario::Linear2;
    if (name == "lotka-volterra") return Scenario::LotkaVolterra;
    if (name == "linear4") return Scenario::Linear4;
    throw std::invalid_argument("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Linear2: return "linear2";
        case Scenario::LotkaVolterra: return "lotka-volterra";
        case Scenario::Linear4: return "linear4";
    }
    throw std::invalid_argument("scenario_name: bad enum");
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr int kStages = 7;
constexpr double kC[kStages] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[kStages][kStages] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[kStages] = {35.0 / 384,      0.0,       500.0 / 1113, 125.0 / 192,
                                 -2187.0 / 6784,  11.0 / 84, 0.0};
constexpr double kB4[kStages] = {5179.0 / 57600, 0.0,          7571.0 / 16695, 393.0 / 640,
                                 -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

// State algebra, shared between the taped and plain-double paths.

Vec2 state_values(const Vec2& s) { return s; }
Vec2 state_values(const Var& s) {
    const Tensor& t = s.value();
    return {t[0], t[1]};
}

// y + h * sum(coef[i] * k[i])
Vec2 lincomb(const Vec2& y, double h, std::span<const double> coef, std::span<const Vec2> ks) {
    Vec2 out = y;
    for (std::size_t i = 0; i < coef.size(); ++i) {
        if (coef[i] == 0.0) continue;
        out[0] += h * coef[i] * ks[i][0];
        out[1] += h * coef[i] * ks[i][1];
    }
    return out;
}

Var lincomb(const Var& y, double h, std::span<const double> coef, std::span<const Var> ks) {
    Var out = y;
    for (std::size_t i = 0; i < coef.size(); ++i) {
        if (coef[i] == 0.0) continue;
        out = add(out, scale(ks[i], h * coef[i]));
    }
    return out;
}

template <class State, class Rhs>
class Integrator {
public:
    Integrator(Rhs rhs, const SolverConfig& cfg, std::vector<double> eta_values)
        : rhs_(std::move(rhs)), cfg_(cfg), eta_(std::move(eta_values)) {
        cfg_.validate();
        h_ = cfg_.method == SolverConfig::Method::Rk4Fixed ? cfg_.step : -1.0;
    }

    /// Advances the state from t0 to t1 (t1 >= t0).
    State advance(State y, double t0, double t1) {
        if (t1 < t0) throw std::invalid_argument("solve: t1 must be >= t0");
        if (t1 == t0) return y;
        if (cfg_.method == SolverConfig::Method::Rk4Fixed) return advance_rk4(std::move(y), t0, t1);
        return advance_adaptive(std::move(y), t0, t1);
    }

private:
    void check_state(const State& y) {
        const Vec2 v = state_values(y);
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) ||
            std::abs(v[0]) > cfg_.blowup_threshold || std::abs(v[1]) > cfg_.blowup_threshold)
            throw SolverInstability("ODE solution exceeded blowup threshold", eta_);
    }

    void count_step() {
        if (++steps_ > cfg_.max_steps)
            throw SolverInstability("ODE solver exceeded max_steps", eta_);
    }

    State advance_rk4(State y, double t0, double t1) {
        const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / cfg_.step - 1e-12)));
        const double h = (t1 - t0) / n;
        for (int s = 0; s < n; ++s) {
            count_step();
            check_state(y);
            const double t = t0 + s * h;
            State k1 = rhs_(y, t);
            const double half[] = {0.5};
            State k2 = rhs_(lincomb(y, h, std::span(half, 1), std::span(&k1, 1)), t + 0.5 * h);
            State k3 = rhs_(lincomb(y, h, std::span(half, 1), std::span(&k2, 1)), t + 0.5 * h);
            const double one[] = {1.0};
            State k4 = rhs_(lincomb(y, h, std::span(one, 1), std::span(&k3, 1)), t + h);
            const double w[] = {1.0 / 6, 2.0 / 6, 2.0 / 6, 1.0 / 6};
            const State ks[] = {k1, k2, k3, k4};
            y = lincomb(y, h, std::span(w, 4), std::span(ks, 4));
        }
        check_state(y);
        return y;
    }

    State advance_adaptive(State y, double t0, double t1) {
        double t = t0;
        if (h_ <= 0.0) h_ = (t1 - t0) / 10.0;
        while (t < t1) {
            count_step();
            check_state(y);
            double h = std::min(h_, t1 - t);
            std::vector<State> ks;
            ks.reserve(kStages);
            for (int s = 0; s < kStages; ++s) {
                State ys = lincomb(y, h, std::span(kA[s], static_cast<std::size_t>(s)),
                                   std::span(ks.data(), ks.size()));
                ks.push_back(rhs_(ys, t + kC[s] * h));
            }
            // Error estimate from stage values only; step control is not taped.
            Vec2 yv = state_values(y);
            Vec2 y5v = yv, e = {0.0, 0.0};
            for (int s = 0; s < kStages; ++s) {
                const Vec2 kv = state_values(ks[s]);
                y5v[0] += h * kB5[s] * kv[0];
                y5v[1] += h * kB5[s] * kv[1];
                e[0] += h * (kB5[s] - kB4[s]) * kv[0];
                e[1] += h * (kB5[s] - kB4[s]) * kv[1];
            }
            double err = 0.0;
            for (int d = 0; d < 2; ++d) {
                const double sc =
                    cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(yv[d]), std::abs(y5v[d]));
                err = std::max(err, std::abs(e[d]) / sc);
            }
            if (err <= 1.0) {
                y = lincomb(y, h, std::span(kB5, kStages), std::span(ks.data(), ks.size()));
                t += h;
            }
            // max-norm control with a conservative safety factor keeps the
            // accumulated error well under the per-step tolerance
            const double factor =
                std::clamp(0.8 * std::pow(std::max(err, 1e-12), -0.2), 0.2, 5.0);
            h_ = h * factor;
        }
        check_state(y);
        return y;
    }

    Rhs rhs_;
    SolverConfig cfg_;
    std::vector<double> eta_;
    double h_;
    int steps_ = 0;
};

void check_grid(const std::vector<double>& times) {
    if (times.empty()) throw std::invalid_argument("solve_grid: empty time grid");
    // repeated times are allowed (zero-length segments); decreasing times are not
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] < times[i - 1])
            throw std::invalid_argument("solve_grid: times must be non-decreasing");
}

std::vector<double> eta_of(Var eta) {
    const Tensor& t = eta.value();
    return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace

Var solve_at(const OdeSystem& sys, Var eta, Var mu0, double t0, double t1,
             const SolverConfig& cfg) {
    if (eta.value().size() != sys.n_free_params)
        throw std::invalid_argument("solve_at: eta length does not match n_free_params");
    auto rhs = [&](const Var& y, double t) { return sys.rhs(y, t, eta); };
    Integrator<Var, decltype(rhs)> integ(rhs, cfg, eta_of(eta));
    return integ.advance(mu0, t0, t1);
}

std::vector<Var> solve_grid_taped(const OdeSystem& sys, Var eta, Var mu0,
                                  const std::vector<double>& times, const SolverConfig& cfg) {
    check_grid(times);
    auto rhs = [&](const Var& y, double t) { return sys.rhs(y, t, eta); };
    Integrator<Var, decltype(rhs)> integ(rhs, cfg, eta_of(eta));
    std::vector<Var> out;
    out.reserve(times.size());
    Var y = mu0;
    double t = times[0];
    for (double target : times) {
        y = integ.advance(y, t, target);
        t = target;
        out.push_back(y);
    }
    return out;
}

Vec2 solve_at_numeric(const OdeSystem& sys, const std::vector<double>& eta, const Vec2& mu0,
                      double t0, double t1, const SolverConfig& cfg) {
    auto rhs = [&](const Vec2& y, double t) { return sys.rhs_numeric(y, t, eta); };
    Integrator<Vec2, decltype(rhs)> integ(rhs, cfg, eta);
    return integ.advance(mu0, t0, t1);
}

Trajectory solve_grid(const OdeSystem& sys, const std::vector<double>& eta, const Vec2& mu0,
                      const std::vector<double>& times, const SolverConfig& cfg) {
    check_grid(times);
    auto rhs = [&](const Vec2& y, double t) { return sys.rhs_numeric(y, t, eta); };
    Integrator<Vec2, decltype(rhs)> integ(rhs, cfg, eta);
    Trajectory traj;
    traj.times = times;
    traj.states.reserve(times.size());
    Vec2 y = mu0;
    double t = times[0];
    for (double target : times) {
        y = integ.advance(y, t, target);
        t = target;
        traj.states.push_back(y);
    }
    return traj;
}

Vec2 linear_closed_form(const Mat2& A, const Vec2& mu0, double t) {
    // exp(B) = e^{tr/2} (c(q) I + f(q) (B - tr/2 I)), B = tA,
    // q^2 = ((B00-B11)/2)^2 + B01*B10, c = cosh, f = sinh(q)/q (trig for q^2 < 0).
    const double b00 = t * A[0][0], b01 = t * A[0][1];
    const double b10 = t * A[1][0], b11 = t * A[1][1];
    const double halftr = 0.5 * (b00 + b11);
    const double disc = 0.25 * (b00 - b11) * (b00 - b11) + b01 * b10;
    double c, f;
    if (disc > 1e-12) {
        const double q = std::sqrt(disc);
        c = std::cosh(q);
        f = std::sinh(q) / q;
    } else if (disc < -1e-12) {
        const double w = std::sqrt(-disc);
        c = std::cos(w);
        f = std::sin(w) / w;
    } else {
        // q -> 0 series; covers defective matrices
        c = 1.0 + disc / 2.0 + disc * disc / 24.0;
        f = 1.0 + disc / 6.0 + disc * disc / 120.0;
    }
    const double s = std::exp(halftr);
    const double m00 = s * (c + f * (b00 - halftr));
    const double m01 = s * f * b01;
    const double m10 = s * f * b10;
    const double m11 = s * (c + f * (b11 - halftr));
    return {m00 * mu0[0] + m01 * mu0[1], m10 * mu0[0] + m11 * mu0[1]};
}

OdeSystem make_paper_system(Scenario s) {
    OdeSystem sys;
    switch (s) {
        case Scenario::Linear2:
            sys.kind = OdeSystem::Kind::Linear2x2;
            sys.n_free_params = 2;
            sys.rhs = [](Var y, double, Var eta) {
                return concat({mul(slice(eta, 0), slice(y, 0)), mul(slice(eta, 1), slice(y, 1))});
            };
            sys.rhs_numeric = [](const Vec2& y, double, const std::vector<double>& eta) {
                return Vec2{eta[0] * y[0], eta[1] * y[1]};
            };
            break;
        case Scenario::LotkaVolterra:
            sys.kind = OdeSystem::Kind::LotkaVolterra;
            sys.n_free_params = 2;
            sys.fixed_params = {1.0, 1.0};  // interaction coefficients
            sys.rhs = [](Var y, double, Var eta) {
                Var u1 = slice(y, 0);
                Var u2 = slice(y, 1);
                Var inter = mul(u1, u2);
                return concat({sub(mul(slice(eta, 0), u1), inter),
                               sub(inter, mul(slice(eta, 1), u1))});
            };
            sys.rhs_numeric = [](const Vec2& y, double, const std::vector<double>& eta) {
                const double inter = y[0] * y[1];
                return Vec2{eta[0] * y[0] - inter, inter - eta[1] * y[0]};
            };
            break;
        case Scenario::Linear4:
            sys.kind = OdeSystem::Kind::Linear2x2;
            sys.n_free_params = 4;
            sys.rhs = [](Var y, double, Var eta) {
                return matmul(reshape(eta, {2, 2}), y);
            };
            sys.rhs_numeric = [](const Vec2& y, double, const std::vector<double>& eta) {
                return Vec2{eta[0] * y[0] + eta[1] * y[1], eta[2] * y[0] + eta[3] * y[1]};
            };
            break;
    }
    return sys;
}

Vec2 paper_initial_state(Scenario s) {
    switch (s) {
        case Scenario::Linear2: return {2.0, 1.0};
        case Scenario::LotkaVolterra: return {2.0, 2.0};
        case Scenario::Linear4: return {4.0, 2.0};
    }
    throw std::invalid_argument("paper_initial_state: bad enum");
}

std::vector<double> paper_group_eta(Scenario s, int group) {
    if (group != 0 && group != 1) throw std::invalid_argument("paper_group_eta: group must be 0 or 1");
    switch (s) {
        case Scenario::Linear2:
            return group == 0 ? std::vector<double>{-0.2, 0.2} : std::vector<double>{-0.2, -0.2};
        case Scenario::LotkaVolterra:
            return group == 0 ? std::vector<double>{0.5, 2.0} : std::vector<double>{1.0, 0.5};
        case Scenario::Linear4:
            return group == 0 ? std::vector<double>{-0.2, 0.1, -0.1, 0.25}
                              : std::vector<double>{-0.2, 0.1, 0.1, -0.2};
    }
    throw std::invalid_argument("paper_group_eta: bad enum");
}

}  // namespace odevae
