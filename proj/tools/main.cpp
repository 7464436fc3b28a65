#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "odevae/datagen.hpp"
#include "odevae/evaluate.hpp"
#include "odevae/model.hpp"
#include "odevae/train.hpp"

namespace fs = std::filesystem;
using namespace odevae;

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Options shared across subcommands. Precedence: command line over config
/// file over defaults.
struct Options {
    std::string scenario = "linear2";
    std::uint64_t seed = 1;
    std::string out;
    std::string data;
    std::string baseline;
    std::string truth;
    std::string checkpoint;
    std::string config;
    double alpha = 1.0;
    double lr = 1e-3;
    int epochs = 20;
    int batch_size = 10;
    double bandwidth = 1.0;
    bool similarity = false;
    bool random_batches = false;
    double solver_tol = 1e-6;
    int checkpoint_every = 0;
    int reference = -1;  // plotdata: highlight this id as the batch reference

    // simulate-only overrides; negative means scenario default
    int n_individuals = -1;
    int p_timevars = -1;
    int q_baseline = -1;
    int n_informative = -1;
};

void add_common_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--scenario", o.scenario, "linear2 | lotka-volterra | linear4");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--data", o.data, "observations CSV (long format)");
    cmd->add_option("--baseline", o.baseline, "baseline CSV (wide format)");
    cmd->add_option("--truth", o.truth, "ground-truth sidecar CSV");
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint path");
    cmd->add_option("--alpha", o.alpha, "ODE-match penalty weight in [0,1]");
    cmd->add_option("--lr", o.lr, "learning rate");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch-size", o.batch_size, "similarity batch size b");
    cmd->add_option("--bandwidth", o.bandwidth, "tricube kernel bandwidth");
    cmd->add_flag("--similarity", o.similarity, "use similarity-based batching");
    cmd->add_flag("--random-batches", o.random_batches, "ablation: random batch members");
    cmd->add_option("--solver-tol", o.solver_tol, "adaptive solver abs/rel tolerance");
    cmd->add_option("--checkpoint-every", o.checkpoint_every, "periodic checkpoint interval");
    cmd->add_option("--reference", o.reference, "plotdata: batch reference id");
    cmd->add_option("--n-individuals", o.n_individuals, "simulate: number of individuals");
    cmd->add_option("--p-timevars", o.p_timevars, "simulate: time-dependent variables");
    cmd->add_option("--q-baseline", o.q_baseline, "simulate: baseline variables");
    cmd->add_option("--n-informative", o.n_informative, "simulate: informative baseline variables");
    cmd->add_option("--config", o.config, "flat key=value config file");
}

/// Applies `key = value` lines from a config file for every key the command
/// line did not set. '#' starts a comment; unknown keys are errors.
void apply_config(const CLI::App& cmd, Options& o) {
    if (o.config.empty()) return;
    std::ifstream in(o.config);
    if (!in) throw std::runtime_error("cannot open config file: " + o.config);

    const std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"scenario", [&](const std::string& v) { o.scenario = v; }},
        {"seed", [&](const std::string& v) { o.seed = std::stoull(v); }},
        {"out", [&](const std::string& v) { o.out = v; }},
        {"data", [&](const std::string& v) { o.data = v; }},
        {"baseline", [&](const std::string& v) { o.baseline = v; }},
        {"truth", [&](const std::string& v) { o.truth = v; }},
        {"checkpoint", [&](const std::string& v) { o.checkpoint = v; }},
        {"alpha", [&](const std::string& v) { o.alpha = std::stod(v); }},
        {"lr", [&](const std::string& v) { o.lr = std::stod(v); }},
        {"epochs", [&](const std::string& v) { o.epochs = std::stoi(v); }},
        {"batch-size", [&](const std::string& v) { o.batch_size = std::stoi(v); }},
        {"bandwidth", [&](const std::string& v) { o.bandwidth = std::stod(v); }},
        {"similarity", [&](const std::string& v) { o.similarity = v == "true" || v == "1"; }},
        {"random-batches", [&](const std::string& v) { o.random_batches = v == "true" || v == "1"; }},
        {"solver-tol", [&](const std::string& v) { o.solver_tol = std::stod(v); }},
        {"checkpoint-every", [&](const std::string& v) { o.checkpoint_every = std::stoi(v); }},
        {"reference", [&](const std::string& v) { o.reference = std::stoi(v); }},
        {"n-individuals", [&](const std::string& v) { o.n_individuals = std::stoi(v); }},
        {"p-timevars", [&](const std::string& v) { o.p_timevars = std::stoi(v); }},
        {"q-baseline", [&](const std::string& v) { o.q_baseline = std::stoi(v); }},
        {"n-informative", [&](const std::string& v) { o.n_informative = std::stoi(v); }},
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            if (auto e = s.find_last_not_of(" \t\r"); e != std::string::npos) s.erase(e + 1);
            else s.clear();
            return s;
        };
        std::string trimmed = strip(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(o.config + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = strip(trimmed.substr(0, eq));
        std::string value = strip(trimmed.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw std::runtime_error(o.config + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (cmd.count("--" + key) == 0) it->second(value);
    }
}

std::string out_dir(const Options& o) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("ODEVAE_OUT")) return env;
    return ".";
}

SolverConfig make_solver(const Options& o) {
    SolverConfig s;
    s.abs_tol = s.rel_tol = o.solver_tol;
    return s;
}

Dataset load_dataset(const Options& o) {
    if (o.data.empty() || o.baseline.empty())
        throw std::runtime_error("--data and --baseline are required");
    Dataset ds = import_csv(o.data, o.baseline);
    if (!o.truth.empty()) import_truth_csv(ds, o.truth);
    return ds;
}

int cmd_simulate(const Options& o) {
    ScenarioConfig cfg = ScenarioConfig::defaults(scenario_from_string(o.scenario));
    cfg.seed = o.seed;
    if (o.n_individuals > 0) cfg.n_individuals = o.n_individuals;
    if (o.p_timevars > 0) cfg.p_timevars = o.p_timevars;
    if (o.q_baseline > 0) cfg.q_baseline = o.q_baseline;
    if (o.n_informative > 0) cfg.n_informative = o.n_informative;
    cfg.validate();

    fs::path dir = out_dir(o);
    fs::create_directories(dir);
    Dataset ds = simulate(cfg);
    export_csv(ds, (dir / "observations.csv").string(), (dir / "baseline.csv").string());
    export_truth_csv(ds, (dir / "truth.csv").string());
    std::cout << "wrote " << ds.individuals.size() << " individuals to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const Options& o) {
    Dataset ds = load_dataset(o);
    Scenario sc = scenario_from_string(o.scenario);
    OdeSystem sys = make_paper_system(sc);

    fs::path dir = out_dir(o);
    fs::create_directories(dir);
    std::string ckpt = o.checkpoint.empty() ? (dir / "model.ckpt").string() : o.checkpoint;

    ModelParams model = ModelParams::init(sc, ds.p(), ds.q(), o.seed);
    if (o.epochs == 0) {
        // emit the initialization checkpoint without training
        model.save(ckpt);
        std::cout << "wrote initialization checkpoint " << ckpt << "\n";
        return 0;
    }

    TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.epochs = o.epochs;
    cfg.alpha = o.alpha;
    cfg.batch_size = o.batch_size;
    cfg.bandwidth = o.bandwidth;
    cfg.use_similarity_batching = o.similarity;
    cfg.random_batches = o.random_batches;
    cfg.seed = o.seed;
    cfg.solver = make_solver(o);
    cfg.checkpoint_every = o.checkpoint_every;
    cfg.checkpoint_prefix = (dir / "model").string();
    cfg.validate();

    TrainReport report = o.similarity ? train_similarity(ds, model, sys, cfg)
                                      : train_plain(ds, model, sys, cfg);
    model.save(ckpt);
    report.export_csv((dir / "train_report.csv").string());
    std::cout << "final epoch mean loss " << fmt17(report.epochs.back().total) << ", skipped "
              << report.total_skips << "/" << report.total_samples << " samples\n";
    return 0;
}

int cmd_evaluate(const Options& o) {
    Dataset ds = load_dataset(o);
    if (o.checkpoint.empty()) throw std::runtime_error("--checkpoint is required");
    ModelParams model = ModelParams::load(o.checkpoint);
    if (model.p != ds.p() || model.q != ds.q())
        throw std::runtime_error("checkpoint shape (p=" + std::to_string(model.p) +
                                 ",q=" + std::to_string(model.q) + ") does not match dataset (p=" +
                                 std::to_string(ds.p()) + ",q=" + std::to_string(ds.q()) + ")");
    OdeSystem sys = make_paper_system(model.scenario);
    SolverConfig solver = make_solver(o);

    fs::path dir = out_dir(o);
    fs::create_directories(dir);
    export_trajectories_csv(ds, model, sys, solver, (dir / "trajectories.csv").string());
    if (ds.has_truth()) {
        RecoveryReport rep = evaluate_recovery(ds, model, sys, model.scenario, solver);
        rep.export_csv((dir / "recovery.csv").string());
        std::cout << "group recovery accuracy " << fmt17(rep.accuracy) << "\n";
    } else {
        std::cout << "no ground truth supplied; wrote trajectories only\n";
    }
    return 0;
}

// ---- plotdata --------------------------------------------------------------

struct TrajPoint {
    double t;
    double value;
};
struct SeriesKey {
    int id;
    int dim;
    bool operator<(const SeriesKey& o) const { return std::tie(id, dim) < std::tie(o.id, o.dim); }
};
struct TrajFile {
    std::map<SeriesKey, std::vector<TrajPoint>> smooth;
    std::map<SeriesKey, std::vector<TrajPoint>> encoder;
    std::vector<int> ids;  // insertion order
};

TrajFile read_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
    std::string line;
    if (!std::getline(in, line) || !line.starts_with("id,t,dim,mu_encoder,mu_smooth"))
        throw std::runtime_error(path + ": unexpected header");
    TrajFile tf;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 5) cells.emplace_back();
        SeriesKey key{std::stoi(cells[0]), std::stoi(cells[2])};
        double t = std::stod(cells[1]);
        if (std::find(tf.ids.begin(), tf.ids.end(), key.id) == tf.ids.end())
            tf.ids.push_back(key.id);
        if (!cells[3].empty()) tf.encoder[key].push_back({t, std::stod(cells[3])});
        if (!cells[4].empty()) tf.smooth[key].push_back({t, std::stod(cells[4])});
    }
    return tf;
}

void write_bundle(const TrajFile& tf, const std::vector<int>& ids, int reference,
                  const fs::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    out << "id,t,dim,kind,value,is_reference\n";
    for (int id : ids) {
        for (int dim = 1; dim <= 2; ++dim) {
            SeriesKey key{id, dim};
            int is_ref = id == reference ? 1 : 0;
            if (auto it = tf.encoder.find(key); it != tf.encoder.end())
                for (const TrajPoint& p : it->second)
                    out << id << "," << fmt17(p.t) << "," << dim << ",encoder," << fmt17(p.value)
                        << "," << is_ref << "\n";
            if (auto it = tf.smooth.find(key); it != tf.smooth.end())
                for (const TrajPoint& p : it->second)
                    out << id << "," << fmt17(p.t) << "," << dim << ",smooth," << fmt17(p.value)
                        << "," << is_ref << "\n";
        }
    }
}

void write_svg(const TrajFile& tf, const std::vector<int>& ids, int reference,
               const fs::path& svg_path) {
    const double W = 640, H = 420, m = 40;
    double tmin = 1e300, tmax = -1e300, vmin = 1e300, vmax = -1e300;
    for (int id : ids)
        for (int dim = 1; dim <= 2; ++dim) {
            auto it = tf.smooth.find({id, dim});
            if (it == tf.smooth.end()) continue;
            for (const TrajPoint& p : it->second) {
                tmin = std::min(tmin, p.t);
                tmax = std::max(tmax, p.t);
                vmin = std::min(vmin, p.value);
                vmax = std::max(vmax, p.value);
            }
        }
    if (tmin > tmax) {
        tmin = 0;
        tmax = 1;
        vmin = 0;
        vmax = 1;
    }
    if (vmax - vmin < 1e-12) vmax = vmin + 1.0;
    auto X = [&](double t) { return m + (t - tmin) / (tmax - tmin) * (W - 2 * m); };
    auto Y = [&](double v) { return H - m - (v - vmin) / (vmax - vmin) * (H - 2 * m); };

    std::ofstream out(svg_path);
    if (!out) throw std::runtime_error("cannot write " + svg_path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m
        << "\" stroke=\"black\"/>\n";
    const char* colors[2] = {"#1f77b4", "#d62728"};
    for (int id : ids)
        for (int dim = 1; dim <= 2; ++dim) {
            auto it = tf.smooth.find({id, dim});
            if (it == tf.smooth.end()) continue;
            bool is_ref = id == reference;
            out << "<polyline fill=\"none\" stroke=\"" << colors[dim - 1] << "\" stroke-width=\""
                << (is_ref ? 3.0 : 1.0) << "\" opacity=\"" << (is_ref ? 1.0 : 0.55)
                << "\" points=\"";
            for (const TrajPoint& p : it->second) out << X(p.t) << "," << Y(p.value) << " ";
            out << "\"/>\n";
            if (auto e = tf.encoder.find({id, dim}); e != tf.encoder.end())
                for (const TrajPoint& p : e->second)
                    out << "<circle cx=\"" << X(p.t) << "\" cy=\"" << Y(p.value)
                        << "\" r=\"3\" fill=\"" << colors[dim - 1] << "\"/>\n";
        }
    out << "</svg>\n";
}

int cmd_plotdata(const Options& o) {
    if (o.data.empty()) throw std::runtime_error("--data (trajectory CSV) is required");
    TrajFile tf = read_trajectories(o.data);
    fs::path dir = out_dir(o);
    fs::create_directories(dir);

    // group ids from the truth sidecar when available
    std::map<int, int> group_of;
    if (!o.truth.empty()) {
        std::ifstream in(o.truth);
        if (!in) throw std::runtime_error("cannot open truth file: " + o.truth);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string idc, gc;
            std::getline(ss, idc, ',');
            std::getline(ss, gc, ',');
            group_of[std::stoi(idc)] = std::stoi(gc);
        }
    }

    int n_panels = 0;
    auto emit = [&](const std::string& name, const std::vector<int>& ids, int reference) {
        write_bundle(tf, ids, reference, dir / (name + ".csv"));
        write_svg(tf, ids, reference, dir / (name + ".svg"));
        ++n_panels;
    };

    if (!group_of.empty()) {
        // figure layout: one individual per group, then each full group
        std::vector<std::vector<int>> groups(2);
        for (int id : tf.ids) {
            auto it = group_of.find(id);
            if (it != group_of.end() && it->second >= 0 && it->second < 2)
                groups[static_cast<std::size_t>(it->second)].push_back(id);
        }
        for (int g = 0; g < 2; ++g)
            if (!groups[static_cast<std::size_t>(g)].empty())
                emit("panel_individual_group" + std::to_string(g),
                     {groups[static_cast<std::size_t>(g)].front()}, -1);
        for (int g = 0; g < 2; ++g)
            if (!groups[static_cast<std::size_t>(g)].empty())
                emit("panel_group" + std::to_string(g), groups[static_cast<std::size_t>(g)], -1);
    } else if (!tf.ids.empty()) {
        emit("panel_individual", {tf.ids.front()}, -1);
        emit("panel_all", tf.ids, -1);
    } else {
        // empty selection still yields an empty bundle
        emit("panel_all", {}, -1);
    }

    if (o.reference >= 0) {
        if (std::find(tf.ids.begin(), tf.ids.end(), o.reference) == tf.ids.end())
            throw std::runtime_error("reference id " + std::to_string(o.reference) +
                                     " not present in trajectory file");
        emit("panel_batch", tf.ids, o.reference);
    }
    std::cout << "wrote " << n_panels << " panel bundles to " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ODE-constrained variational autoencoder for short longitudinal data"};
    app.require_subcommand(1);
    Options o;
    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
    CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint against a dataset");
    CLI::App* plot = app.add_subcommand("plotdata", "bundle trajectory CSVs into figure panels");
    for (CLI::App* cmd : {sim, train, eval, plot}) add_common_flags(cmd, o);

    CLI11_PARSE(app, argc, argv);
    try {
        CLI::App* cmd = app.get_subcommands().front();
        apply_config(*cmd, o);
        if (cmd == sim) return cmd_simulate(o);
        if (cmd == train) return cmd_train(o);
        if (cmd == eval) return cmd_evaluate(o);
        return cmd_plotdata(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
