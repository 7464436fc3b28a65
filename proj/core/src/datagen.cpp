#include "odevae/datagen.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "csv_util.hpp"

namespace odevae {

namespace csv = csvutil;

ScenarioConfig ScenarioConfig::defaults(Scenario s) {
    ScenarioConfig cfg;
    cfg.scenario = s;
    switch (s) {
        case Scenario::Linear2:
            break;  // struct defaults are the linear2 settings
        case Scenario::LotkaVolterra:
            cfg.n_individuals = 200;
            cfg.n_informative = 30;
            break;
        case Scenario::Linear4:
            cfg.n_informative = 20;  // 5 baseline variables per free parameter
            cfg.sigma_ind = 0.5;
            cfg.sigma_info = 0.1;
            cfg.sigma_noise = 0.1;
            cfg.baseline_mode = BaselineMode::TrueOdeParams;
            break;
    }
    return cfg;
}

void ScenarioConfig::validate() const {
    if (n_individuals < 1) throw std::invalid_argument("ScenarioConfig: n_individuals must be >= 1");
    if (p_timevars < 2) throw std::invalid_argument("ScenarioConfig: p_timevars must be >= 2");
    if (n_informative < 0 || n_informative > q_baseline)
        throw std::invalid_argument("ScenarioConfig: n_informative must be in [0, q_baseline]");
    if (sigma_var < 0 || sigma_ind < 0 || sigma_info < 0 || sigma_noise < 0)
        throw std::invalid_argument("ScenarioConfig: standard deviations must be >= 0");
    if (t_min <= 0.0 || t_max <= t_min)
        throw std::invalid_argument("ScenarioConfig: need 0 < t_min < t_max");
}

bool Dataset::has_truth() const {
    return !individuals.empty() && individuals[0].true_group.has_value();
}

namespace {

Vec2 true_state(Scenario s, const std::vector<double>& eta, double t) {
    const Vec2 mu0 = paper_initial_state(s);
    if (s == Scenario::LotkaVolterra) {
        static const OdeSystem sys = make_paper_system(Scenario::LotkaVolterra);
        SolverConfig cfg;
        cfg.abs_tol = cfg.rel_tol = 1e-10;
        return solve_at_numeric(sys, eta, mu0, 0.0, t, cfg);
    }
    Mat2 A;
    if (s == Scenario::Linear2) {
        A = {{{eta[0], 0.0}, {0.0, eta[1]}}};
    } else {
        A = {{{eta[0], eta[1]}, {eta[2], eta[3]}}};
    }
    return linear_closed_form(A, mu0, t);
}

}  // namespace

Dataset simulate(const ScenarioConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> t1_dist(cfg.t_min, cfg.t_max);
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    // Balanced group assignment: exactly n/2 per group when n is even.
    const int n = cfg.n_individuals;
    std::vector<int> groups(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(i)] = i % 2;
    std::shuffle(groups.begin(), groups.end(), rng);

    const int n_eta = static_cast<int>(paper_group_eta(cfg.scenario, 0).size());
    const int per_param = cfg.n_informative > 0 && cfg.baseline_mode == ScenarioConfig::BaselineMode::TrueOdeParams
                              ? std::max(1, cfg.n_informative / n_eta)
                              : 0;

    Dataset ds;
    ds.scenario = scenario_name(cfg.scenario);
    ds.seed = cfg.seed;
    for (int j = 0; j < cfg.p_timevars; ++j) ds.var_names.push_back("var_" + std::to_string(j + 1));

    for (int i = 0; i < n; ++i) {
        Individual ind;
        ind.id = i + 1;
        ind.true_group = groups[static_cast<std::size_t>(i)];
        ind.true_eta = paper_group_eta(cfg.scenario, *ind.true_group);

        const double t1 = t1_dist(rng);
        for (double t : {0.0, t1}) {
            const Vec2 u = true_state(cfg.scenario, ind.true_eta, t);
            Observation obs;
            obs.t = t;
            obs.x.resize(static_cast<std::size_t>(cfg.p_timevars));
            for (int j = 0; j < cfg.p_timevars; ++j) {
                const double base = j < cfg.p_timevars / 2 ? u[0] : u[1];
                const double delta = cfg.sigma_var * stdnorm(rng);
                const double eps = cfg.sigma_ind * stdnorm(rng);
                obs.x[static_cast<std::size_t>(j)] = base + delta + eps;
            }
            ind.observations.push_back(std::move(obs));
        }

        ind.baseline.resize(static_cast<std::size_t>(cfg.q_baseline));
        for (int k = 0; k < cfg.q_baseline; ++k) {
            double v;
            if (k < cfg.n_informative) {
                double mean;
                if (cfg.baseline_mode == ScenarioConfig::BaselineMode::GroupMembership) {
                    mean = *ind.true_group == 0 ? 1.0 : -1.0;
                } else {
                    mean = ind.true_eta[static_cast<std::size_t>(std::min(k / per_param, n_eta - 1))];
                }
                v = mean + cfg.sigma_info * stdnorm(rng);
            } else {
                v = cfg.sigma_noise * stdnorm(rng);
            }
            ind.baseline[static_cast<std::size_t>(k)] = v;
        }
        ds.individuals.push_back(std::move(ind));
    }
    return ds;
}

void export_csv(const Dataset& ds, const std::string& obs_path, const std::string& baseline_path) {
    auto obs = csv::open_out(obs_path);
    obs << "id,time";
    for (std::size_t j = 0; j < ds.var_names.size(); ++j) obs << "," << ds.var_names[j];
    obs << "\n";
    for (const Individual& ind : ds.individuals)
        for (const Observation& o : ind.observations) {
            obs << ind.id << "," << csv::fmt(o.t);
            for (double v : o.x) obs << "," << csv::fmt(v);
            obs << "\n";
        }

    auto base = csv::open_out(baseline_path);
    base << "id";
    const int q = ds.q();
    for (int k = 0; k < q; ++k) base << ",b_" << (k + 1);
    base << "\n";
    for (const Individual& ind : ds.individuals) {
        base << ind.id;
        for (double v : ind.baseline) base << "," << csv::fmt(v);
        base << "\n";
    }
}

Dataset import_csv(const std::string& obs_path, const std::string& baseline_path) {
    Dataset ds;
    auto obs = csv::open_in(obs_path);
    std::string line;
    int line_no = 0;
    if (!std::getline(obs, line)) throw std::runtime_error(obs_path + ": empty file");
    ++line_no;
    auto header = csv::split(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "time")
        throw std::runtime_error(obs_path + ":1: expected header id,time,var_...");
    const std::size_t p = header.size() - 2;
    ds.var_names.assign(header.begin() + 2, header.end());

    std::map<int, std::size_t> index;  // id -> position in ds.individuals
    while (std::getline(obs, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = csv::split(line);
        if (cells.size() != p + 2)
            throw std::runtime_error(obs_path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(p + 2) + " columns, got " + std::to_string(cells.size()));
        const int id = csv::parse_int(cells[0], obs_path, line_no);
        Observation o;
        o.t = csv::parse_double(cells[1], obs_path, line_no);
        for (std::size_t j = 0; j < p; ++j)
            o.x.push_back(csv::parse_double(cells[j + 2], obs_path, line_no));
        auto it = index.find(id);
        if (it == index.end()) {
            index[id] = ds.individuals.size();
            Individual ind;
            ind.id = id;
            ind.observations.push_back(std::move(o));
            ds.individuals.push_back(std::move(ind));
        } else {
            ds.individuals[it->second].observations.push_back(std::move(o));
        }
    }

    for (Individual& ind : ds.individuals) {
        std::sort(ind.observations.begin(), ind.observations.end(),
                  [](const Observation& a, const Observation& b) { return a.t < b.t; });
        if (ind.observations.size() < 2)
            throw std::runtime_error(obs_path + ": individual " + std::to_string(ind.id) +
                                     " has fewer than 2 observations");
        for (std::size_t k = 1; k < ind.observations.size(); ++k)
            if (ind.observations[k].t <= ind.observations[k - 1].t)
                throw std::runtime_error(obs_path + ": individual " + std::to_string(ind.id) +
                                         " has duplicate observation times");
    }

    auto base = csv::open_in(baseline_path);
    line_no = 0;
    if (!std::getline(base, line)) throw std::runtime_error(baseline_path + ": empty file");
    ++line_no;
    auto bheader = csv::split(line);
    if (bheader.size() < 2 || bheader[0] != "id")
        throw std::runtime_error(baseline_path + ":1: expected header id,b_...");
    const std::size_t q = bheader.size() - 1;

    std::map<int, std::vector<double>> baselines;
    while (std::getline(base, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = csv::split(line);
        if (cells.size() != q + 1)
            throw std::runtime_error(baseline_path + ":" + std::to_string(line_no) +
                                     ": wrong column count");
        const int id = csv::parse_int(cells[0], baseline_path, line_no);
        std::vector<double> b;
        for (std::size_t k = 0; k < q; ++k)
            b.push_back(csv::parse_double(cells[k + 1], baseline_path, line_no));
        baselines[id] = std::move(b);
    }

    for (Individual& ind : ds.individuals) {
        auto it = baselines.find(ind.id);
        if (it == baselines.end())
            throw std::runtime_error(baseline_path + ": missing baseline row for id " +
                                     std::to_string(ind.id));
        ind.baseline = std::move(it->second);
    }
    return ds;
}

void export_truth_csv(const Dataset& ds, const std::string& path) {
    if (!ds.has_truth()) throw std::runtime_error("export_truth_csv: dataset has no ground truth");
    auto f = csv::open_out(path);
    const std::size_t k = ds.individuals[0].true_eta.size();
    f << "id,group";
    for (std::size_t j = 0; j < k; ++j) f << ",eta_" << (j + 1);
    f << ",t1\n";
    for (const Individual& ind : ds.individuals) {
        f << ind.id << "," << *ind.true_group;
        for (double e : ind.true_eta) f << "," << csv::fmt(e);
        f << "," << csv::fmt(ind.observations.back().t) << "\n";
    }
}

void import_truth_csv(Dataset& ds, const std::string& path) {
    auto f = csv::open_in(path);
    std::string line;
    int line_no = 0;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    ++line_no;
    auto header = csv::split(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "group")
        throw std::runtime_error(path + ":1: expected header id,group,eta_...,t1");
    const std::size_t k = header.size() - 3;

    std::map<int, std::pair<int, std::vector<double>>> truth;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = csv::split(line);
        if (cells.size() != k + 3)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": wrong column count");
        const int id = csv::parse_int(cells[0], path, line_no);
        const int group = csv::parse_int(cells[1], path, line_no);
        std::vector<double> eta;
        for (std::size_t j = 0; j < k; ++j)
            eta.push_back(csv::parse_double(cells[j + 2], path, line_no));
        truth[id] = {group, std::move(eta)};
    }
    for (Individual& ind : ds.individuals) {
        auto it = truth.find(ind.id);
        if (it == truth.end())
            throw std::runtime_error(path + ": missing truth row for id " + std::to_string(ind.id));
        ind.true_group = it->second.first;
        ind.true_eta = it->second.second;
    }
}

}  // namespace odevae
