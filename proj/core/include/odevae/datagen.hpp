#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "odevae/ode.hpp"

namespace odevae {

struct ScenarioConfig {
    Scenario scenario = Scenario::Linear2;
    int n_individuals = 100;
    int p_timevars = 10;
    int q_baseline = 50;
    int n_informative = 10;
    double sigma_var = 0.1;
    double sigma_ind = 0.1;
    double sigma_info = 0.5;
    double sigma_noise = 0.5;
    double t_min = 1.5;  // second time point drawn uniformly from [t_min, t_max]
    double t_max = 10.0;
    enum class BaselineMode { GroupMembership, TrueOdeParams };
    BaselineMode baseline_mode = BaselineMode::GroupMembership;
    std::uint64_t seed = 1;

    /// Per-scenario simulation defaults.
    static ScenarioConfig defaults(Scenario s);
    void validate() const;
};

struct Observation {
    double t;
    std::vector<double> x;
};

struct Individual {
    int id = 0;
    std::vector<Observation> observations;  // times ascending, >= 2 entries
    std::vector<double> baseline;
    std::optional<int> true_group;          // simulated data only
    std::vector<double> true_eta;           // simulated data only
};

struct Dataset {
    std::vector<Individual> individuals;
    std::vector<std::string> var_names;
    std::string scenario;  // provenance; empty for imported real data
    std::uint64_t seed = 0;

    int p() const { return individuals.empty() ? 0 : static_cast<int>(individuals[0].observations[0].x.size()); }
    int q() const { return individuals.empty() ? 0 : static_cast<int>(individuals[0].baseline.size()); }
    bool has_truth() const;
};

Dataset simulate(const ScenarioConfig& cfg);

/// Observations in long format (id,time,var_1..var_p), baseline in wide format
/// (id,b_1..b_q); UTF-8, header row, '.' decimal separator, values at 17
/// significant digits.
void export_csv(const Dataset& ds, const std::string& obs_path, const std::string& baseline_path);
Dataset import_csv(const std::string& obs_path, const std::string& baseline_path);

/// Ground-truth sidecar (id,group,eta_1..eta_k,t1) for simulated data.
void export_truth_csv(const Dataset& ds, const std::string& path);
void import_truth_csv(Dataset& ds, const std::string& path);

}  // namespace odevae
