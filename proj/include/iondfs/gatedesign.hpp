#pragma once

#include "iondfs/noise.hpp"
#include "iondfs/qstate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace iondfs {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimensionless equilibrium positions of n ions in a harmonic axial well
// (length unit (e^2 / 4 pi eps0 m wz^2)^(1/3)), found by Newton iteration.
inline std::vector<double> equilibrium_positions(int n) {
    if (n < 1) throw std::invalid_argument("equilibrium_positions: n must be >= 1");
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = (n == 1 ? 0.0 : (-1.0 + 2.0 * i / (n - 1)) * (n - 1) * 0.3);
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd g = x;
        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const double d = x(i) - x(j);
                g(i) -= (d > 0 ? 1.0 : -1.0) / (d * d);
                const double c = 2.0 / std::pow(std::abs(d), 3);
                h(i, i) += c;
                h(i, j) = -c;
            }
        const Eigen::VectorXd step = h.ldlt().solve(g);
        x -= step;
        if (g.norm() < 1e-13) break;
    }
    std::vector<double> out(x.data(), x.data() + n);
    std::sort(out.begin(), out.end());
    // enforce the exact reflection symmetry of the solution
    for (int i = 0; i < n / 2; ++i) {
        const double v = 0.5 * (out[n - 1 - i] - out[i]);
        out[i] = -v;
        out[n - 1 - i] = v;
    }
    if (n % 2 == 1) out[n / 2] = 0.0;
    return out;
}

// Dimensionless Coulomb coupling matrix of the transverse normal modes.
inline Eigen::MatrixXd coulomb_matrix(const std::vector<double>& positions) {
    const int n = static_cast<int>(positions.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = std::pow(std::abs(positions[i] - positions[j]), 3);
            c(i, j) = -1.0 / d;
            c(i, i) += 1.0 / d;
        }
    return c;
}

// Transverse normal modes of the chain. Frequencies in MHz, sorted
// ascending; the last (highest) mode is the center-of-mass mode. eta(i, m)
// is the participation of ion i in mode m.
struct ChainModes {
    std::vector<double> freqs_mhz;
    Eigen::MatrixXd eta;  // [ion, mode], columns match freqs_mhz
};

inline ChainModes transverse_modes(const std::vector<double>& positions, double f_com_mhz,
                                   double f_ax_mhz) {
    const int n = static_cast<int>(positions.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coulomb_matrix(positions));
    ChainModes m;
    m.freqs_mhz.resize(n);
    m.eta.resize(n, n);
    // eigenvalues ascending; transverse frequency decreases with eigenvalue,
    // so reverse the order to get ascending frequencies with COM last
    for (int k = 0; k < n; ++k) {
        const double lam = es.eigenvalues()(n - 1 - k);
        const double f2 = f_com_mhz * f_com_mhz - lam * f_ax_mhz * f_ax_mhz;
        if (f2 <= 0.0)
            throw ConfigurationError("transverse mode frequency is imaginary; axial confinement too strong");
        m.freqs_mhz[k] = std::sqrt(f2);
        m.eta.col(k) = es.eigenvectors().col(n - 1 - k);
    }
    return m;
}

// One-parameter least-squares fit of the axial frequency to a measured
// transverse spectrum, given the COM frequency.
inline double fit_axial_freq(const std::vector<double>& measured_mhz, double f_com_mhz,
                             const std::vector<double>& positions) {
    auto cost = [&](double f_ax) {
        ChainModes m = transverse_modes(positions, f_com_mhz, f_ax);
        double s = 0.0;
        for (std::size_t k = 0; k < measured_mhz.size(); ++k) {
            const double d = m.freqs_mhz[k] - measured_mhz[k];
            s += d * d;
        }
        return s;
    };
    // golden-section search on a bracket below the stability limit
    const double lam_max = [&] {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coulomb_matrix(positions),
                                                          Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    }();
    double a = 1e-3, b = 0.999 * f_com_mhz / std::sqrt(lam_max);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (cost(c) < cost(d)) b = d; else a = c;
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    return 0.5 * (a + b);
}

struct ChainModel {
    std::vector<double> positions;
    std::vector<double> mode_freqs_mhz;  // ascending, COM last
    Eigen::MatrixXd eta;                 // [ion, mode]
    double f_com_mhz = 0.0;
    double f_ax_mhz = 0.0;

    // Chain model from a measured spectrum: mode vectors from the ideal
    // chain, frequencies taken verbatim from the measurement, axial
    // frequency fitted for reference.
    static ChainModel from_measured(int n, const std::vector<double>& measured_mhz) {
        if (static_cast<int>(measured_mhz.size()) != n)
            throw ConfigurationError("measured spectrum size does not match ion count");
        ChainModel cm;
        cm.positions = equilibrium_positions(n);
        cm.f_com_mhz = *std::max_element(measured_mhz.begin(), measured_mhz.end());
        cm.f_ax_mhz = fit_axial_freq(measured_mhz, cm.f_com_mhz, cm.positions);
        ChainModes m = transverse_modes(cm.positions, cm.f_com_mhz, cm.f_ax_mhz);
        cm.eta = m.eta;
        cm.mode_freqs_mhz = measured_mhz;
        std::sort(cm.mode_freqs_mhz.begin(), cm.mode_freqs_mhz.end());
        return cm;
    }

    static ChainModel ideal(int n, double f_com_mhz, double f_ax_mhz) {
        ChainModel cm;
        cm.positions = equilibrium_positions(n);
        cm.f_com_mhz = f_com_mhz;
        cm.f_ax_mhz = f_ax_mhz;
        ChainModes m = transverse_modes(cm.positions, f_com_mhz, f_ax_mhz);
        cm.mode_freqs_mhz = m.freqs_mhz;
        cm.eta = m.eta;
        return cm;
    }

    int n_ions() const { return static_cast<int>(positions.size()); }
};

enum class PhasePattern { Antisymmetric, Symmetric };

// Segmented-phase spin-dependent-force gate on one ion pair.
struct GateSolution {
    int ion_i = 0, ion_j = 0;
    double gate_time_s = 0.0;
    double drive_freq_hz = 0.0;  // bichromatic detuning splitting / 2 from carrier
    int n_segments = 0;
    PhasePattern pattern = PhasePattern::Antisymmetric;
    std::vector<double> phases;
    double rabi_hz = 0.0;            // Omega / 2 pi
    double geom_phase = 0.0;         // solved two-ion phase
    std::vector<double> residual_alpha;  // |I_k| / T per mode at solution
};

namespace detail {

// per-mode, per-segment integrals of e^{i delta t}
inline Eigen::MatrixXcd segment_integrals(const std::vector<double>& delta, double T, int n_seg) {
    const int n_modes = static_cast<int>(delta.size());
    Eigen::MatrixXcd b(n_modes, n_seg);
    const Complex i(0.0, 1.0);
    for (int k = 0; k < n_modes; ++k) {
        for (int m = 0; m < n_seg; ++m) {
            const double t0 = T * m / n_seg, t1 = T * (m + 1) / n_seg;
            if (std::abs(delta[k]) < 1e-9)
                b(k, m) = t1 - t0;
            else
                b(k, m) = (std::exp(i * (delta[k] * t1)) - std::exp(i * (delta[k] * t0))) /
                          (i * delta[k]);
        }
    }
    return b;
}

inline std::vector<double> mode_deltas(const ChainModel& chain, double mu_hz) {
    std::vector<double> d(chain.mode_freqs_mhz.size());
    for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = 2.0 * kPi * (mu_hz - chain.mode_freqs_mhz[k] * 1e6);
    return d;
}

inline Eigen::VectorXd expand_phases(const Eigen::VectorXd& half, PhasePattern pattern) {
    const int h = static_cast<int>(half.size());
    Eigen::VectorXd phi(2 * h);
    for (int m = 0; m < h; ++m) {
        phi(m) = half(m);
        phi(2 * h - 1 - m) = pattern == PhasePattern::Antisymmetric ? -half(m) : half(m);
    }
    return phi;
}

inline Eigen::VectorXcd closure_integrals(const Eigen::MatrixXcd& b, const Eigen::VectorXd& phi) {
    Eigen::VectorXcd e(phi.size());
    for (int m = 0; m < phi.size(); ++m) e(m) = std::exp(Complex(0.0, phi(m)));
    return b * e;
}

}  // namespace detail

// Phase-space displacement of every mode at the end of the gate for one of
// the driven ions (units of the zero-point width times eta * Omega/2 * I_k).
inline std::vector<Complex> mode_displacements(const GateSolution& sol, const ChainModel& chain,
                                               int ion) {
    const auto delta = detail::mode_deltas(chain, sol.drive_freq_hz);
    const Eigen::MatrixXcd b = detail::segment_integrals(delta, sol.gate_time_s, sol.n_segments);
    Eigen::VectorXd phi(sol.phases.size());
    for (std::size_t m = 0; m < sol.phases.size(); ++m) phi(m) = sol.phases[m];
    const Eigen::VectorXcd iks = detail::closure_integrals(b, phi);
    std::vector<Complex> out(delta.size());
    const double omega = 2.0 * kPi * sol.rabi_hz;
    for (std::size_t k = 0; k < delta.size(); ++k)
        out[k] = chain.eta(ion, static_cast<int>(k)) * omega / 2.0 * iks(k);
    return out;
}

// Phase-space trajectory of one mode for one driven ion, sampled at
// n_samples points across the gate.
inline std::vector<Complex> mode_trajectory(const GateSolution& sol, const ChainModel& chain,
                                            int ion, int mode, int n_samples) {
    const auto delta = detail::mode_deltas(chain, sol.drive_freq_hz);
    const double dk = delta[mode];
    const double omega = 2.0 * kPi * sol.rabi_hz;
    const Complex i(0.0, 1.0);
    std::vector<Complex> out;
    out.reserve(n_samples + 1);
    for (int s = 0; s <= n_samples; ++s) {
        const double t = sol.gate_time_s * s / n_samples;
        Complex acc = 0.0;
        for (int m = 0; m < sol.n_segments; ++m) {
            const double t0 = sol.gate_time_s * m / sol.n_segments;
            const double t1 = std::min(t, sol.gate_time_s * (m + 1) / sol.n_segments);
            if (t1 <= t0) break;
            Complex seg;
            if (std::abs(dk) < 1e-9)
                seg = t1 - t0;
            else
                seg = (std::exp(i * (dk * t1)) - std::exp(i * (dk * t0))) / (i * dk);
            acc += std::exp(Complex(0.0, sol.phases[m])) * seg;
        }
        out.push_back(chain.eta(ion, mode) * omega / 2.0 * acc);
    }
    return out;
}

// Two-ion geometric phase accumulated by the gate, from the ordered double
// integral over segments; the sign convention matches a positive solved
// phase for the antisymmetric solutions used here.
inline double geometric_phase(const std::vector<double>& phases, const ChainModel& chain,
                              int ion_i, int ion_j, double mu_hz, double T, double omega_rad) {
    const int n_seg = static_cast<int>(phases.size());
    const auto delta = detail::mode_deltas(chain, mu_hz);
    const Eigen::MatrixXcd b = detail::segment_integrals(delta, T, n_seg);
    const double tau = T / n_seg;
    double total = 0.0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        Complex acc = 0.0;
        double s = 0.0;
        for (int m = 0; m < n_seg; ++m) {
            const Complex a = std::exp(Complex(0.0, phases[m])) * b(static_cast<int>(k), m);
            s += (a * std::conj(acc)).imag();
            acc += a;
        }
        const double dk = delta[k];
        if (std::abs(dk) >= 1e-9) s += (tau / dk - std::sin(dk * tau) / (dk * dk)) * n_seg;
        total += chain.eta(ion_i, static_cast<int>(k)) * chain.eta(ion_j, static_cast<int>(k)) *
                 omega_rad * omega_rad / 2.0 * s;
    }
    return -total;
}

struct SolveOptions {
    int n_segments = 24;
    double gate_time_s = 150e-6;
    double mu_hz = 1.337e6;
    double target_phase = kPi / 10.0;
    PhasePattern pattern = PhasePattern::Antisymmetric;
    int max_starts = 20;
    double tol_rel = 1e-9;  // max |I_k| relative to gate time
    std::uint64_t seed = 12345;
};

// Solve the segment phases so that every mode trajectory closes, then scale
// the Rabi frequency to reach the target two-ion geometric phase.
inline GateSolution solve_phases(const ChainModel& chain, int ion_i, int ion_j,
                                 const SolveOptions& opt) {
    if (opt.n_segments < 2 || opt.n_segments > 64 || opt.n_segments % 2 != 0)
        throw std::invalid_argument("segment count must be even and within [2, 64]");
    if (ion_i == ion_j || ion_i < 0 || ion_j < 0 || ion_i >= chain.n_ions() ||
        ion_j >= chain.n_ions())
        throw std::invalid_argument("invalid driven ion pair");
    const auto delta = detail::mode_deltas(chain, opt.mu_hz);
    const Eigen::MatrixXcd b = detail::segment_integrals(delta, opt.gate_time_s, opt.n_segments);
    const int n_modes = static_cast<int>(delta.size());
    const int half_n = opt.n_segments / 2;

    auto resid = [&](const Eigen::VectorXd& half) {
        const Eigen::VectorXcd iks = detail::closure_integrals(b, detail::expand_phases(half, opt.pattern));
        Eigen::VectorXd r(2 * n_modes);
        for (int k = 0; k < n_modes; ++k) {
            r(k) = iks(k).real();
            r(n_modes + k) = iks(k).imag();
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& half) {
        const Eigen::VectorXd phi = detail::expand_phases(half, opt.pattern);
        Eigen::MatrixXd j(2 * n_modes, half_n);
        const Complex i(0.0, 1.0);
        for (int m = 0; m < half_n; ++m) {
            const int mm = opt.n_segments - 1 - m;
            const double mirror = opt.pattern == PhasePattern::Antisymmetric ? -1.0 : 1.0;
            for (int k = 0; k < n_modes; ++k) {
                const Complex d = i * std::exp(i * phi(m)) * b(k, m) +
                                  mirror * i * std::exp(i * phi(mm)) * b(k, mm);
                j(k, m) = d.real();
                j(n_modes + k, m) = d.imag();
            }
        }
        return j;
    };

    Rng rng(opt.seed);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    Eigen::VectorXd best_half;
    double best_norm = std::numeric_limits<double>::infinity();
    double best_theta1 = 0.0;
    for (int start = 0; start < opt.max_starts; ++start) {
        Eigen::VectorXd half(half_n);
        for (int m = 0; m < half_n; ++m) half(m) = u(rng);
        for (int it = 0; it < 300; ++it) {
            const Eigen::VectorXd r = resid(half);
            if (r.norm() < 0.1 * opt.tol_rel * opt.gate_time_s) break;
            const Eigen::MatrixXd j = jacobian(half);
            const Eigen::VectorXd step = j.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-r);
            double lam = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 40; ++ls) {
                if (resid(half + lam * step).norm() < r.norm()) {
                    half += lam * step;
                    moved = true;
                    break;
                }
                lam *= 0.5;
            }
            if (!moved) half += 1e-3 * step;
        }
        const Eigen::VectorXd r = resid(half);
        const double rn = r.norm();
        if (rn >= best_norm) continue;
        const std::vector<double> phi = [&] {
            const Eigen::VectorXd p = detail::expand_phases(half, opt.pattern);
            return std::vector<double>(p.data(), p.data() + p.size());
        }();
        const double theta1 = geometric_phase(phi, chain, ion_i, ion_j, opt.mu_hz,
                                              opt.gate_time_s, 1.0);
        if (rn < opt.tol_rel * opt.gate_time_s * std::sqrt(2.0 * n_modes) && theta1 <= 0.0)
            continue;  // closed but wrong winding direction; try another start
        best_norm = rn;
        best_half = half;
        best_theta1 = theta1;
        if (rn < opt.tol_rel * opt.gate_time_s) break;
    }
    if (!best_half.size())
        throw SolverError("phase solver found no usable solution");

    GateSolution sol;
    sol.ion_i = ion_i;
    sol.ion_j = ion_j;
    sol.gate_time_s = opt.gate_time_s;
    sol.drive_freq_hz = opt.mu_hz;
    sol.n_segments = opt.n_segments;
    sol.pattern = opt.pattern;
    const Eigen::VectorXd phi = detail::expand_phases(best_half, opt.pattern);
    sol.phases.assign(phi.data(), phi.data() + phi.size());

    const Eigen::VectorXcd iks = detail::closure_integrals(b, phi);
    sol.residual_alpha.resize(n_modes);
    double max_rel = 0.0;
    for (int k = 0; k < n_modes; ++k) {
        sol.residual_alpha[k] = std::abs(iks(k)) / opt.gate_time_s;
        max_rel = std::max(max_rel, sol.residual_alpha[k]);
    }
    if (max_rel > opt.tol_rel) {
        std::ostringstream os;
        os << "phase solver did not close all mode trajectories; residual |I_k|/T:";
        for (double a : sol.residual_alpha) os << " " << a;
        throw SolverError(os.str());
    }
    if (best_theta1 <= 0.0 && std::isfinite(opt.tol_rel))
        throw SolverError("no closed solution with the required phase orientation");
    const double omega = std::sqrt(opt.target_phase / std::abs(best_theta1));
    sol.rabi_hz = omega / (2.0 * kPi);
    sol.geom_phase = geometric_phase(sol.phases, chain, ion_i, ion_j, opt.mu_hz,
                                     opt.gate_time_s, omega);
    return sol;
}

// Best-effort solve that reports the achieved residual instead of throwing;
// used to compare phase patterns that cannot close exactly.
inline GateSolution solve_phases_best_effort(const ChainModel& chain, int ion_i, int ion_j,
                                             SolveOptions opt) {
    try {
        return solve_phases(chain, ion_i, ion_j, opt);
    } catch (const SolverError&) {
        opt.tol_rel = std::numeric_limits<double>::infinity();
        GateSolution sol = solve_phases(chain, ion_i, ion_j, opt);
        return sol;
    }
}

struct RobustnessPoint {
    double drift_hz = 0.0;
    double infidelity = 0.0;
    double phase_error = 0.0;  // (Theta - target) / target
};

/// Gate error under a uniform drift of all mode frequencies: thermal
// displacement error plus the squared relative geometric-phase error.
inline std::vector<RobustnessPoint> robustness_scan(const GateSolution& sol,
                                                    const ChainModel& chain,
                                                    const std::vector<double>& drifts_hz,
                                                    double nbar, double target_phase = kPi / 10.0) {
    std::vector<RobustnessPoint> out;
    out.reserve(drifts_hz.size());
    for (double drift : drifts_hz) {
        ChainModel shifted = chain;
        for (double& f : shifted.mode_freqs_mhz) f += drift * 1e-6;
        const auto ai = mode_displacements(sol, shifted, sol.ion_i);
        const auto aj = mode_displacements(sol, shifted, sol.ion_j);
        RobustnessPoint p;
        p.drift_hz = drift;
        for (std::size_t k = 0; k < ai.size(); ++k)
            p.infidelity += (std::norm(ai[k]) + std::norm(aj[k])) * (2.0 * nbar + 1.0) / 2.0;
        const double theta = geometric_phase(sol.phases, shifted, sol.ion_i, sol.ion_j,
                                             sol.drive_freq_hz, sol.gate_time_s,
                                             2.0 * kPi * sol.rabi_hz);
        p.phase_error = (theta - target_phase) / target_phase;
        p.infidelity += p.phase_error * p.phase_error;
        out.push_back(p);
    }
    return out;
}

// Bell-state fidelity prediction for the five-sub-gate entangling sequence:
// each sub-gate contributes the thermal displacement error of its residual
// trajectories, composed multiplicatively.
inline double bell_fidelity_estimate(const GateSolution& sol, const ChainModel& chain,
                                     double nbar, double drift_hz = 0.0, int n_subgates = 5,
                                     double target_phase = kPi / 10.0) {
    const auto pts = robustness_scan(sol, chain, {drift_hz}, nbar, target_phase);
    const double eps = pts[0].infidelity;
    return std::pow(std::max(0.0, 1.0 - eps), n_subgates);
}

inline nlohmann::json gate_solution_json(const GateSolution& sol) {
    nlohmann::json j;
    j["ion_i"] = sol.ion_i;
    j["ion_j"] = sol.ion_j;
    j["gate_time_s"] = sol.gate_time_s;
    j["drive_freq_hz"] = sol.drive_freq_hz;
    j["n_segments"] = sol.n_segments;
    j["pattern"] = sol.pattern == PhasePattern::Antisymmetric ? "antisymmetric" : "symmetric";
    j["phases"] = sol.phases;
    j["rabi_hz"] = sol.rabi_hz;
    j["geom_phase"] = sol.geom_phase;
    j["residual_alpha"] = sol.residual_alpha;
    return j;
}

// CSV of solved Rabi frequencies and residuals for every memory-ion pair.
inline std::string pairwise_gate_csv(const ChainModel& chain, const std::vector<int>& ions,
                                     const SolveOptions& opt) {
    std::ostringstream os;
    os << "ion_i,ion_j,rabi_hz,geom_phase,max_residual_alpha\n";
    os.precision(12);
    for (std::size_t a = 0; a < ions.size(); ++a)
        for (std::size_t b = a + 1; b < ions.size(); ++b) {
            const GateSolution sol = solve_phases(chain, ions[a], ions[b], opt);
            os << ions[a] << "," << ions[b] << "," << sol.rabi_hz << "," << sol.geom_phase << ","
               << *std::max_element(sol.residual_alpha.begin(), sol.residual_alpha.end()) << "\n";
        }
    return os.str();
}

}  // namespace iondfs
