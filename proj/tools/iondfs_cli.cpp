#include "iondfs/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace iondfs;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* c = cmd->add_option("--config", args.config_path, "configuration file (JSON)");
    if (config_required) c->required();
    cmd->add_option("--seed", args.seed, "override run.seed");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--format", args.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig load(const CommonArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(args.config_path);
    if (args.seed) cfg.run.seed = *args.seed;
    return cfg;
}

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write output file: " + path);
    out << content;
    std::cout << "wrote " << path << "\n";
}

nlohmann::json meta(const ExperimentConfig& cfg) {
    return {{"version", kVersion}, {"seed", cfg.run.seed}, {"config", cfg.echo_json}};
}

int run_prep(const CommonArgs& args) {
    const ExperimentConfig cfg = load(args);
    const PrepReport rep = run_prep_fidelity(cfg);
    write_file(args.out_dir, "prep_fidelity.json", prep_report_json(cfg, rep).dump(2) + "\n");
    return 0;
}

int run_storage_cmd(const CommonArgs& args) {
    const ExperimentConfig cfg = load(args);
    const StorageScan scan = run_storage_scan(cfg);
    if (args.format == "csv") {
        write_file(args.out_dir, "storage.csv", storage_csv(scan));
    } else {
        nlohmann::json j = meta(cfg);
        j["csv"] = storage_csv(scan);
        const ExpFitResult fit = fit_storage_scan(scan);
        j["fit"] = fit_result_json(fit, static_cast<int>(scan.points.size()));
        write_file(args.out_dir, "storage.json", j.dump(2) + "\n");
    }
    return 0;
}

int run_parity_cmd(const CommonArgs& args) {
    const ExperimentConfig cfg = load(args);
    const ParityScan scan = run_parity_scan(cfg);
    if (args.format == "csv") {
        write_file(args.out_dir, "parity.csv", parity_csv(scan));
    } else {
        nlohmann::json j = meta(cfg);
        j["csv"] = parity_csv(scan);
        write_file(args.out_dir, "parity.json", j.dump(2) + "\n");
    }
    return 0;
}

int run_gate_design(const CommonArgs& args) {
    const ExperimentConfig cfg = load(args);
    const ChainModel chain = chain_model_from(cfg);
    SolveOptions opt;
    opt.n_segments = cfg.gate.n_segments;
    opt.gate_time_s = cfg.gate.gate_time_s;
    opt.mu_hz = cfg.gate.mu_hz;
    opt.target_phase = cfg.gate.target_phase;
    opt.pattern = cfg.gate.pattern == "symmetric" ? PhasePattern::Symmetric
                                                  : PhasePattern::Antisymmetric;
    opt.seed = cfg.run.seed;
    if (args.format == "csv") {
        const std::vector<int> ions = Layout::six_ion().memory_sites;
        write_file(args.out_dir, "gate_pairs.csv", pairwise_gate_csv(chain, ions, opt));
        return 0;
    }
    const GateSolution sol = solve_phases(chain, cfg.gate.driven_i, cfg.gate.driven_j, opt);
    nlohmann::json j = meta(cfg);
    j["solution"] = gate_solution_json(sol);
    j["predicted_bell_fidelity"] =
        bell_fidelity_estimate(sol, chain, cfg.gate.nbar, cfg.gate.drift_hz);
    const auto scan = robustness_scan(sol, chain, {-1000.0, -200.0, 0.0, 200.0, 1000.0},
                                      cfg.gate.nbar, cfg.gate.target_phase);
    for (const auto& p : scan)
        j["robustness"].push_back(
            {{"drift_hz", p.drift_hz}, {"infidelity", p.infidelity}, {"phase_error", p.phase_error}});
    write_file(args.out_dir, "gate_design.json", j.dump(2) + "\n");
    return 0;
}

int run_fit(const CommonArgs& args, const std::string& in_path) {
    std::ifstream in(in_path);
    if (!in) throw ConfigurationError("cannot open input file: " + in_path);
    std::vector<BinomialPoint> data;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ls(line);
        BinomialPoint pt;
        if (!(ls >> pt.t >> pt.k >> pt.n)) continue;  // skip header / malformed rows
        data.push_back(pt);
    }
    const ExpFitResult fit = mle_fit_exponential(data);
    write_file(args.out_dir, "fit.json",
               fit_result_json(fit, static_cast<int>(data.size())).dump(2) + "\n");
    return 0;
}

int run_detect(const CommonArgs& args) {
    const ExperimentConfig cfg = load(args);
    const DetectionCalib calib = run_detection_calib(cfg);
    if (args.format == "csv") {
        write_file(args.out_dir, "detection_calib.csv", detection_calib_csv(calib));
    } else {
        nlohmann::json j = meta(cfg);
        j["accuracy"] = {{"0", calib.accuracy[0]}, {"1", calib.accuracy[1]}, {"L", calib.accuracy[2]}};
        j["trials"] = calib.trials;
        write_file(args.out_dir, "detection_calib.json", j.dump(2) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"six-ion logical-qubit memory simulator"};
    app.require_subcommand(1);

    CommonArgs prep_args, storage_args, parity_args, gate_args, fit_args, detect_args;
    std::string fit_in;

    auto* prep = app.add_subcommand("prep-fidelity", "entangled-state preparation fidelity");
    add_common(prep, prep_args, false);
    auto* storage = app.add_subcommand("storage", "storage-lifetime scan");
    add_common(storage, storage_args, false);
    auto* parity = app.add_subcommand("parity", "parity-oscillation scan");
    add_common(parity, parity_args, false);
    auto* gate = app.add_subcommand("gate-design", "segmented entangling-gate solver");
    add_common(gate, gate_args, false);
    auto* fit = app.add_subcommand("fit", "exponential decay fit of t,k,n data");
    add_common(fit, fit_args, false);
    fit->add_option("--in", fit_in, "input CSV with columns t,k,n")->required();
    auto* detect = app.add_subcommand("detect-calib", "readout-assignment calibration");
    add_common(detect, detect_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (prep->parsed()) return run_prep(prep_args);
        if (storage->parsed()) return run_storage_cmd(storage_args);
        if (parity->parsed()) return run_parity_cmd(parity_args);
        if (gate->parsed()) return run_gate_design(gate_args);
        if (fit->parsed()) return run_fit(fit_args, fit_in);
        if (detect->parsed()) return run_detect(detect_args);
    } catch (const iondfs::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    } catch (const iondfs::ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
