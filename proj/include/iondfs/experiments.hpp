#pragma once

#include "iondfs/config.hpp"
#include "iondfs/estimators.hpp"
#include "iondfs/fitting.hpp"
#include "iondfs/gatedesign.hpp"

#include <future>
#include <sstream>
#include <thread>

namespace iondfs {

inline ChainModel chain_model_from(const ExperimentConfig& cfg) {
    if (cfg.chain.use_measured_modes)
        return ChainModel::from_measured(cfg.chain.n_ions, cfg.chain.measured_modes_mhz);
    // without a measured list, fit the axial frequency to it anyway for the
    // ideal model so both paths share the same geometry
    ChainModel ref = ChainModel::from_measured(cfg.chain.n_ions, cfg.chain.measured_modes_mhz);
    return ChainModel::ideal(cfg.chain.n_ions, cfg.chain.f_com_mhz, ref.f_ax_mhz);
}

// Field curvature (Hz per squared dimensionless position) giving the chosen
// parity period for the four-ion state, whose two branches differ by the
// outer-minus-inner sum of squared positions.
inline double curvature_for_period(double period_s, const std::vector<double>& positions,
                                   const Layout& layout = Layout::six_ion()) {
    const auto& m = layout.memory_sites;
    const double w = positions[m[0]] * positions[m[0]] + positions[m[3]] * positions[m[3]] -
                     positions[m[1]] * positions[m[1]] - positions[m[2]] * positions[m[2]];
    if (period_s <= 0.0 || std::abs(w) < 1e-12)
        throw std::invalid_argument("curvature_for_period: degenerate inputs");
    return 1.0 / (period_s * w);
}

namespace detail {

inline Rng point_rng(std::uint64_t seed, std::uint64_t index) {
    // splitmix-style stream separation so work items are order-independent
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
}

inline int worker_count(int threads_cfg, std::size_t n_items) {
    int t = threads_cfg > 0 ? threads_cfg : static_cast<int>(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    return static_cast<int>(std::min<std::size_t>(t, n_items));
}

template <typename Fn>
inline void parallel_for(int threads_cfg, std::size_t n_items, Fn&& fn) {
    const int workers = worker_count(threads_cfg, n_items);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_items; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> futs;
    for (int w = 0; w < workers; ++w)
        futs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n_items; i += workers) fn(i);
        }));
    for (auto& f : futs) f.get();
}

inline FieldProfile storage_profile(const ExperimentConfig& cfg, const std::vector<double>& positions) {
    FieldProfile p;
    p.positions = positions;
    if (cfg.run.encoding == Encoding::Sensitive) {
        p.b0 = cfg.noise.b0_hz;
        p.grad = cfg.noise.grad_hz;
        p.curv = cfg.noise.curv_hz;
    }
    return p;
}

inline NoiseModel storage_noise(const ExperimentConfig& cfg, int n_sites) {
    NoiseModel m;
    m.lambda_leak = cfg.noise.leak_rate;
    if (cfg.run.encoding == Encoding::Sensitive) {
        m.ou_common = {cfg.noise.ou_common_sigma_hz, cfg.noise.ou_common_tau_s};
        m.ou_differential = {cfg.noise.ou_diff_sigma_hz, cfg.noise.ou_diff_tau_s};
    } else {
        // clock states see no external field; only a small residual dephasing
        m.ou_common = {cfg.noise.residual_sigma_hz, cfg.noise.residual_tau_s};
        m.ou_differential = {0.0, 1.0};
    }
    m.sensitivity.assign(n_sites, 1.0);
    return m;
}

inline Register prepared_register(const ExperimentConfig& cfg, Rng& rng) {
    (void)rng;
    const Layout layout = Layout::six_ion();
    const BellTarget target = target_from_string(cfg.run.target);
    if (!cfg.run.noisy_prep) return register_from_pure(logical_target(target, layout), layout.roles());
    Register reg = init_register(layout.n_sites, layout.roles());
    const GateNoise gn{cfg.gate.p1, depolarizing_from_bell_fidelity(cfg.gate.bell_fidelity)};
    run_circuit_inplace(reg, build_prep_circuit(target, layout), gn);
    return reg;
}

}  // namespace detail

struct PrepReport {
    FidelityEstimate estimate;
    std::vector<double> coolant_pop0;
};

inline PrepReport run_prep_fidelity(const ExperimentConfig& cfg) {
    const Layout layout = Layout::six_ion();
    const BellTarget target = target_from_string(cfg.run.target);
    Register reg = init_register(layout.n_sites, layout.roles());
    const GateNoise gn{cfg.gate.p1, depolarizing_from_bell_fidelity(cfg.gate.bell_fidelity)};
    run_circuit_inplace(reg, build_prep_circuit(target, layout), gn);

    PrepReport rep;
    for (int s = 0; s < reg.n_sites; ++s) {
        if (reg.roles[s] == SiteRole::Memory) continue;
        double p0 = 0.0;
        const std::int64_t stride = pow3(s);
        for (std::int64_t k = 0; k < reg.dim(); ++k)
            if ((k / stride) % 3 == 0) p0 += reg.rho(k, k).real();
        rep.coolant_pop0.push_back(p0);
    }
    Rng rng = detail::point_rng(cfg.run.seed, 0);
    rep.estimate = ghz_fidelity_mc(reg, family_of(target), cfg.run.prep_shots, rng, layout);
    return rep;
}

inline nlohmann::json prep_report_json(const ExperimentConfig& cfg, const PrepReport& rep) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["seed"] = cfg.run.seed;
    j["config"] = cfg.echo_json;
    auto term = [](const TermEstimate& t) {
        return nlohmann::json{{"mean", t.mean},
                              {"std_error", t.std_error},
                              {"shots", t.shots},
                              {"discarded_leak", t.discarded_leak}};
    };
    j["o1"] = term(rep.estimate.o1);
    j["o2"] = term(rep.estimate.o2);
    j["o3"] = term(rep.estimate.o3);
    j["fidelity"] = rep.estimate.fidelity;
    j["fidelity_std_error"] = rep.estimate.fidelity_stderr;
    j["coolant_pop0"] = rep.coolant_pop0;
    return j;
}

struct StoragePoint {
    double t = 0.0;
    FidelityEstimate estimate;
    int k_success = 0;
    int n_kept = 0;
    int discarded = 0;
    double survival = 1.0;
};

struct StorageScan {
    std::vector<StoragePoint> points;
};

inline StorageScan run_storage_scan(const ExperimentConfig& cfg) {
    const Layout layout = Layout::six_ion();
    const BellTarget target = target_from_string(cfg.run.target);
    const StateFamily family = family_of(target);
    const ChainModel chain = chain_model_from(cfg);
    const FieldProfile profile = detail::storage_profile(cfg, chain.positions);
    const NoiseModel noise = detail::storage_noise(cfg, layout.n_sites);

    StorageScan scan;
    scan.points.resize(cfg.run.times_s.size());
    detail::parallel_for(cfg.run.threads, cfg.run.times_s.size(), [&](std::size_t i) {
        Rng rng = detail::point_rng(cfg.run.seed, i);
        Register reg = detail::prepared_register(cfg, rng);
        storage_evolution_inplace(reg, cfg.run.times_s[i], noise, profile, cfg.run.echo,
                                  cfg.run.storage_steps, rng);
        StoragePoint pt;
        pt.t = cfg.run.times_s[i];
        pt.estimate = ghz_fidelity_mc(reg, family, cfg.run.shots[i], rng, layout);
        pt.k_success =
            pt.estimate.o1.n_agree + pt.estimate.o2.n_agree + pt.estimate.o3.n_agree;
        pt.n_kept = pt.estimate.o1.shots + pt.estimate.o2.shots + pt.estimate.o3.shots;
        pt.discarded = pt.estimate.o1.discarded_leak + pt.estimate.o2.discarded_leak +
                       pt.estimate.o3.discarded_leak;
        pt.survival = static_cast<double>(pt.n_kept) / (pt.n_kept + pt.discarded);
        scan.points[i] = pt;
    });
    return scan;
}

inline std::string storage_csv(const StorageScan& scan) {
    std::ostringstream os;
    os.precision(12);
    os << "t_s,o1,o1_err,o2,o2_err,o3,o3_err,fidelity,fidelity_err,"
          "k_success,n_kept,discarded,survival\n";
    for (const auto& p : scan.points) {
        os << p.t << "," << p.estimate.o1.mean << "," << p.estimate.o1.std_error << ","
           << p.estimate.o2.mean << "," << p.estimate.o2.std_error << "," << p.estimate.o3.mean
           << "," << p.estimate.o3.std_error << "," << p.estimate.fidelity << ","
           << p.estimate.fidelity_stderr << "," << p.k_success << "," << p.n_kept << ","
           << p.discarded << "," << p.survival << "\n";
    }
    return os.str();
}

inline ExpFitResult fit_storage_scan(const StorageScan& scan) {
    std::vector<BinomialPoint> data;
    for (const auto& p : scan.points) data.push_back({p.t, p.k_success, p.n_kept});
    return mle_fit_exponential(data);
}

struct ParityPoint {
    int window = 0;
    double t = 0.0;
    double parity = 0.0;
};

struct ParityScan {
    std::vector<ParityPoint> points;
};

// Parity oscillation pipeline. Order 2 evolves the four-ion state of the
// six-ion register; order 1 evolves the two-ion state (|01> + |10>)/sqrt(2)
// with the two sites at positions -1/2 and +1/2, so noise.grad_hz equals the
// inter-ion detuning difference. Spin echo is off (run.echo is ignored here).
inline ParityScan run_parity_scan(const ExperimentConfig& cfg) {
    if (cfg.run.encoding != Encoding::Sensitive)
        throw ConfigurationError("parity scan requires run.encoding = sensitive");

    Layout layout;
    Register base;
    FieldProfile profile;
    if (cfg.run.dfs_order == 2) {
        layout = Layout::six_ion();
        const ChainModel chain = chain_model_from(cfg);
        base = register_from_pure(logical_target(target_from_string(cfg.run.target), layout),
                                  layout.roles());
        profile = detail::storage_profile(cfg, chain.positions);
    } else {
        layout = Layout::bare(2);
        Vector v = Vector::Zero(9);
        v(basis_index(std::string("01"))) = 1.0 / std::sqrt(2.0);
        v(basis_index(std::string("10"))) = 1.0 / std::sqrt(2.0);
        base = register_from_pure(v, layout.roles());
        profile = detail::storage_profile(cfg, {-0.5, 0.5});
    }
    const NoiseModel noise = detail::storage_noise(cfg, layout.n_sites);
    const bool deterministic = noise.ou_common.sigma_hz == 0.0 &&
                               noise.ou_differential.sigma_hz == 0.0 &&
                               noise.lambda_leak == 0.0;

    std::vector<std::pair<int, double>> grid;
    for (std::size_t w = 0; w < cfg.run.windows.size(); ++w) {
        const auto [t0, t1] = cfg.run.windows[w];
        for (int g = 0; g < cfg.run.grid_points; ++g)
            grid.emplace_back(static_cast<int>(w),
                              t0 + (t1 - t0) * g / (cfg.run.grid_points - 1));
    }
    ParityScan scan;
    scan.points.resize(grid.size());
    detail::parallel_for(cfg.run.threads, grid.size(), [&](std::size_t i) {
        const auto [w, t] = grid[i];
        Register reg = base;
        if (t > 0.0) {
            if (deterministic) {
                // exact static evolution in a single slice
                const std::vector<double> det = detuning_vector(profile);
                Vector diag = Vector::Ones(reg.dim());
                for (int s = 0; s < reg.n_sites; ++s) {
                    const Eigen::Vector3cd d = dephasing_site_diag(det[s], t);
                    const std::int64_t stride = pow3(s);
                    for (std::int64_t k = 0; k < reg.dim(); ++k) diag(k) *= d((k / stride) % 3);
                }
                detail::apply_diag_phase(reg, diag);
            } else {
                Rng rng = detail::point_rng(cfg.run.seed, i);
                storage_evolution_inplace(reg, t, noise, profile, false, cfg.run.storage_steps,
                                          rng);
            }
        }
        scan.points[i] = {w, t, parity_expectation(reg, 0.0, layout)};
    });
    return scan;
}

inline std::string parity_csv(const ParityScan& scan) {
    std::ostringstream os;
    os.precision(12);
    os << "window,t_s,parity\n";
    for (const auto& p : scan.points) os << p.window << "," << p.t << "," << p.parity << "\n";
    return os.str();
}

inline nlohmann::json fit_result_json(const ExpFitResult& fit, int n_points) {
    nlohmann::json j;
    j["amplitude"] = fit.amplitude;
    j["tau_s"] = fit.tau;
    j["loglik"] = fit.loglik;
    j["tau_lower_s"] = fit.tau_lower;
    j["tau_upper_s"] = fit.tau_upper_unbounded ? nlohmann::json("inf") : nlohmann::json(fit.tau_upper);
    j["tau_upper_unbounded"] = fit.tau_upper_unbounded;
    j["n_points"] = n_points;
    return j;
}

struct DetectionCalib {
    // accuracy per true symbol, order {Zero, One, Leak}
    std::vector<double> accuracy;
    int trials = 0;
};

inline DetectionCalib run_detection_calib(const ExperimentConfig& cfg) {
    DetectionCalib out;
    out.trials = cfg.detection.trials;
    Rng rng = detail::point_rng(cfg.run.seed, 99);
    for (ReadoutSymbol truth : {ReadoutSymbol::Zero, ReadoutSymbol::One, ReadoutSymbol::Leak}) {
        int correct = 0;
        for (int t = 0; t < cfg.detection.trials; ++t)
            correct += simulate_readout(truth, cfg.detection.model, rng).decoded == truth;
        out.accuracy.push_back(static_cast<double>(correct) / cfg.detection.trials);
    }
    return out;
}

inline std::string detection_calib_csv(const DetectionCalib& c) {
    std::ostringstream os;
    os.precision(12);
    os << "truth,trials,accuracy\n";
    const char* names[] = {"0", "1", "L"};
    for (std::size_t i = 0; i < c.accuracy.size(); ++i)
        os << names[i] << "," << c.trials << "," << c.accuracy[i] << "\n";
    return os.str();
}

}  // namespace iondfs
