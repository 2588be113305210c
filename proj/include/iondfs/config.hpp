#pragma once

#include "iondfs/circuits.hpp"
#include "iondfs/detection.hpp"
#include "iondfs/gatedesign.hpp"
#include "iondfs/noise.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace iondfs {

inline constexpr const char* kVersion = "1.0.0";

enum class Encoding { Clock, Sensitive };

struct ChainConfig {
    int n_ions = 6;
    double f_com_mhz = 1.458;
    std::vector<double> measured_modes_mhz = {1.303, 1.347, 1.385, 1.416, 1.441, 1.458};
    bool use_measured_modes = true;
};

struct NoiseConfig {
    double leak_rate = 0.0;  // per ion, 1/s
    double b0_hz = 0.0;
    double grad_hz = 0.0;  // per unit dimensionless position
    double curv_hz = 0.0;
    double ou_common_sigma_hz = 0.0;
    double ou_common_tau_s = 1.0;
    double ou_diff_sigma_hz = 0.0;
    double ou_diff_tau_s = 1.0;
    // clock-encoding residual dephasing, applied as a common OU process
    double residual_sigma_hz = 0.0;
    double residual_tau_s = 1.0;
};

struct GateConfig {
    double p1 = 0.0;
    double bell_fidelity = 0.991;  // calibrates the two-site depolarizing strength
    double mu_hz = 1.337e6;
    double gate_time_s = 150e-6;
    int n_segments = 24;
    double target_phase = kPi / 10.0;
    std::string pattern = "antisymmetric";
    double nbar = 0.1;
    double drift_hz = 0.0;
    int driven_i = 2;  // chain indices of the driven pair
    int driven_j = 3;
};

struct RunConfig {
    std::uint64_t seed = 12345;
    std::vector<double> times_s = {2, 30, 60, 120, 240, 960};
    std::vector<int> shots = {250, 80, 70, 60, 50, 30};
    int prep_shots = 250;
    bool echo = true;
    Encoding encoding = Encoding::Clock;
    int dfs_order = 2;
    std::string target = "psi+";
    bool noisy_prep = false;
    int storage_steps = 16;
    std::vector<std::pair<double, double>> windows = {{0.0, 0.35}};
    int grid_points = 36;
    int threads = 0;  // 0 = available cores
};

struct DetectionConfig {
    AssignmentModel model;
    int trials = 10000;
};

struct ExperimentConfig {
    ChainConfig chain;
    NoiseConfig noise;
    GateConfig gate;
    RunConfig run;
    DetectionConfig detection;
    nlohmann::json echo_json;  // parsed file content, for report echoing
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& section,
                           const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            throw ConfigurationError("unknown config key: " +
                                     (section.empty() ? key : section + "." + key));
    }
}

template <typename T>
inline void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.echo_json = j;
    detail::reject_unknown(j, "", {"chain", "noise", "gate", "run", "detection"});

    if (j.contains("chain")) {
        const auto& c = j.at("chain");
        detail::reject_unknown(c, "chain",
                               {"n_ions", "f_com_mhz", "measured_modes_mhz", "use_measured_modes"});
        detail::read_key(c, "n_ions", cfg.chain.n_ions);
        detail::read_key(c, "f_com_mhz", cfg.chain.f_com_mhz);
        detail::read_key(c, "measured_modes_mhz", cfg.chain.measured_modes_mhz);
        detail::read_key(c, "use_measured_modes", cfg.chain.use_measured_modes);
        if (cfg.chain.n_ions < 2) throw ConfigurationError("chain.n_ions must be >= 2");
        if (cfg.chain.f_com_mhz <= 0.0) throw ConfigurationError("chain.f_com_mhz must be positive");
    }
    if (j.contains("noise")) {
        const auto& c = j.at("noise");
        detail::reject_unknown(c, "noise",
                               {"leak_rate", "b0_hz", "grad_hz", "curv_hz", "ou_common_sigma_hz",
                                "ou_common_tau_s", "ou_diff_sigma_hz", "ou_diff_tau_s",
                                "residual_sigma_hz", "residual_tau_s"});
        detail::read_key(c, "leak_rate", cfg.noise.leak_rate);
        detail::read_key(c, "b0_hz", cfg.noise.b0_hz);
        detail::read_key(c, "grad_hz", cfg.noise.grad_hz);
        detail::read_key(c, "curv_hz", cfg.noise.curv_hz);
        detail::read_key(c, "ou_common_sigma_hz", cfg.noise.ou_common_sigma_hz);
        detail::read_key(c, "ou_common_tau_s", cfg.noise.ou_common_tau_s);
        detail::read_key(c, "ou_diff_sigma_hz", cfg.noise.ou_diff_sigma_hz);
        detail::read_key(c, "ou_diff_tau_s", cfg.noise.ou_diff_tau_s);
        detail::read_key(c, "residual_sigma_hz", cfg.noise.residual_sigma_hz);
        detail::read_key(c, "residual_tau_s", cfg.noise.residual_tau_s);
        if (cfg.noise.leak_rate < 0.0) throw ConfigurationError("noise.leak_rate must be non-negative");
        if (cfg.noise.ou_common_sigma_hz < 0.0 || cfg.noise.ou_diff_sigma_hz < 0.0 ||
            cfg.noise.residual_sigma_hz < 0.0)
            throw ConfigurationError("noise OU sigma values must be non-negative");
        if (cfg.noise.ou_common_tau_s <= 0.0 || cfg.noise.ou_diff_tau_s <= 0.0 ||
            cfg.noise.residual_tau_s <= 0.0)
            throw ConfigurationError("noise OU correlation times must be positive");
    }
    if (j.contains("gate")) {
        const auto& c = j.at("gate");
        detail::reject_unknown(c, "gate",
                               {"p1", "bell_fidelity", "mu_hz", "gate_time_s", "n_segments",
                                "target_phase", "pattern", "nbar", "drift_hz", "driven_i",
                                "driven_j"});
        detail::read_key(c, "p1", cfg.gate.p1);
        detail::read_key(c, "bell_fidelity", cfg.gate.bell_fidelity);
        detail::read_key(c, "mu_hz", cfg.gate.mu_hz);
        detail::read_key(c, "gate_time_s", cfg.gate.gate_time_s);
        detail::read_key(c, "n_segments", cfg.gate.n_segments);
        detail::read_key(c, "target_phase", cfg.gate.target_phase);
        detail::read_key(c, "pattern", cfg.gate.pattern);
        detail::read_key(c, "nbar", cfg.gate.nbar);
        detail::read_key(c, "drift_hz", cfg.gate.drift_hz);
        detail::read_key(c, "driven_i", cfg.gate.driven_i);
        detail::read_key(c, "driven_j", cfg.gate.driven_j);
        if (cfg.gate.p1 < 0.0 || cfg.gate.p1 > 1.0) throw ConfigurationError("gate.p1 out of [0, 1]");
        if (cfg.gate.bell_fidelity < 0.0 || cfg.gate.bell_fidelity > 1.0)
            throw ConfigurationError("gate.bell_fidelity out of [0, 1]");
        if (cfg.gate.pattern != "antisymmetric" && cfg.gate.pattern != "symmetric")
            throw ConfigurationError("gate.pattern must be antisymmetric or symmetric");
        if (cfg.gate.gate_time_s <= 0.0) throw ConfigurationError("gate.gate_time_s must be positive");
        if (cfg.gate.nbar < 0.0) throw ConfigurationError("gate.nbar must be non-negative");
    }
    if (j.contains("run")) {
        const auto& c = j.at("run");
        detail::reject_unknown(c, "run",
                               {"seed", "times_s", "shots", "prep_shots", "echo", "encoding",
                                "dfs_order", "target", "noisy_prep", "storage_steps", "windows",
                                "grid_points", "threads"});
        detail::read_key(c, "seed", cfg.run.seed);
        detail::read_key(c, "times_s", cfg.run.times_s);
        detail::read_key(c, "shots", cfg.run.shots);
        detail::read_key(c, "prep_shots", cfg.run.prep_shots);
        detail::read_key(c, "echo", cfg.run.echo);
        if (c.contains("encoding")) {
            const std::string e = c.at("encoding").get<std::string>();
            if (e == "clock") cfg.run.encoding = Encoding::Clock;
            else if (e == "sensitive") cfg.run.encoding = Encoding::Sensitive;
            else throw ConfigurationError("run.encoding must be clock or sensitive");
        }
        detail::read_key(c, "dfs_order", cfg.run.dfs_order);
        detail::read_key(c, "target", cfg.run.target);
        detail::read_key(c, "noisy_prep", cfg.run.noisy_prep);
        detail::read_key(c, "storage_steps", cfg.run.storage_steps);
        if (c.contains("windows")) {
            cfg.run.windows.clear();
            for (const auto& w : c.at("windows")) {
                if (!w.is_array() || w.size() != 2)
                    throw ConfigurationError("run.windows entries must be [start, end] pairs");
                cfg.run.windows.emplace_back(w[0].get<double>(), w[1].get<double>());
            }
        }
        detail::read_key(c, "grid_points", cfg.run.grid_points);
        detail::read_key(c, "threads", cfg.run.threads);
        if (cfg.run.times_s.size() != cfg.run.shots.size())
            throw ConfigurationError("run.times_s and run.shots must have equal length");
        for (std::size_t i = 0; i < cfg.run.times_s.size(); ++i) {
            if (cfg.run.times_s[i] < 0.0) throw ConfigurationError("run.times_s must be non-negative");
            if (i > 0 && cfg.run.times_s[i] <= cfg.run.times_s[i - 1])
                throw ConfigurationError("run.times_s must be strictly ascending");
            if (cfg.run.shots[i] < 1) throw ConfigurationError("run.shots must be >= 1");
        }
        if (cfg.run.prep_shots < 1) throw ConfigurationError("run.prep_shots must be >= 1");
        if (cfg.run.dfs_order != 1 && cfg.run.dfs_order != 2)
            throw ConfigurationError("run.dfs_order must be 1 or 2");
        if (cfg.run.storage_steps < 2 || cfg.run.storage_steps % 2 != 0)
            throw ConfigurationError("run.storage_steps must be even and >= 2");
        if (cfg.run.grid_points < 2) throw ConfigurationError("run.grid_points must be >= 2");
        for (const auto& [a, b] : cfg.run.windows)
            if (!(b > a) || a < 0.0) throw ConfigurationError("run.windows must satisfy 0 <= start < end");
        const std::set<std::string> targets{"psi+", "psi-", "phi+", "phi-"};
        if (!targets.count(cfg.run.target))
            throw ConfigurationError("run.target must be one of psi+, psi-, phi+, phi-");
    }
    if (j.contains("detection")) {
        const auto& c = j.at("detection");
        detail::reject_unknown(c, "detection", {"f0", "f1", "leak_stage3", "trials"});
        detail::read_key(c, "f0", cfg.detection.model.f0);
        detail::read_key(c, "f1", cfg.detection.model.f1);
        detail::read_key(c, "leak_stage3", cfg.detection.model.leak_stage3);
        detail::read_key(c, "trials", cfg.detection.trials);
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(cfg.detection.model.f0)) throw ConfigurationError("detection.f0 out of [0, 1]");
        if (!in01(cfg.detection.model.f1)) throw ConfigurationError("detection.f1 out of [0, 1]");
        if (!in01(cfg.detection.model.leak_stage3))
            throw ConfigurationError("detection.leak_stage3 out of [0, 1]");
        if (cfg.detection.trials < 1) throw ConfigurationError("detection.trials must be >= 1");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

inline BellTarget target_from_string(const std::string& s) {
    if (s == "psi+") return BellTarget::PsiPlus;
    if (s == "psi-") return BellTarget::PsiMinus;
    if (s == "phi+") return BellTarget::PhiPlus;
    if (s == "phi-") return BellTarget::PhiMinus;
    throw ConfigurationError("unknown target state: " + s);
}

inline StateFamily family_of(BellTarget t) {
    return (t == BellTarget::PhiPlus || t == BellTarget::PhiMinus) ? StateFamily::Phi
                                                                  : StateFamily::Psi;
}

}  // namespace iondfs
