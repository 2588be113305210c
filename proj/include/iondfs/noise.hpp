#pragma once

#include "iondfs/circuits.hpp"
#include "iondfs/qstate.hpp"

#include <cmath>
#include <vector>

namespace iondfs {

struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Quadratic magnetic-field detuning profile along the chain axis,
// delta(x) = b0 + grad*x + curv*x^2, with x the dimensionless equilibrium
// position of each ion. Detunings are in Hz.
struct FieldProfile {
    double b0 = 0.0;
    double grad = 0.0;
    double curv = 0.0;
    std::vector<double> positions;  // strictly increasing

    void validate() const {
        for (std::size_t i = 1; i < positions.size(); ++i)
            if (!(positions[i] > positions[i - 1]))
                throw ConfigurationError("ion positions must be strictly increasing");
    }
};

// Stationary Ornstein-Uhlenbeck field noise: one common mode plus one
// gradient-like differential mode whose per-ion weight is x_i / x_ref.
struct OuParams {
    double sigma_hz = 0.0;       // stationary standard deviation
    double tau_s = 1.0;          // correlation time
};

struct NoiseModel {
    double lambda_leak = 0.0;            // per-ion leakage rate, 1/s
    OuParams ou_common;
    OuParams ou_differential;
    std::vector<double> sensitivity;     // per-ion field sensitivity weight
};

inline std::vector<double> detuning_vector(const FieldProfile& p) {
    p.validate();
    std::vector<double> d(p.positions.size());
    for (std::size_t i = 0; i < p.positions.size(); ++i) {
        const double x = p.positions[i];
        d[i] = p.b0 + p.grad * x + p.curv * x * x;
    }
    return d;
}

// reference scale for the differential OU weights: outermost position
inline double differential_xref(const FieldProfile& p) {
    double m = 0.0;
    for (double x : p.positions) m = std::max(m, std::abs(x));
    return m > 0.0 ? m : 1.0;
}

// Diagonal phase factor per site level for free evolution at detuning
// delta (Hz) over time t: |1> acquires exp(-i 2 pi delta t), |0> and |L| are
// unaffected.
inline Eigen::Vector3cd dephasing_site_diag(double delta_hz, double t) {
    Eigen::Vector3cd d;
    const Complex i(0.0, 1.0);
    d << 1.0, std::exp(-i * (2.0 * kPi * delta_hz * t)), 1.0;
    return d;
}

// Full-register diagonal unitary of per-ion free evolution.
inline Matrix dephasing_unitary(const std::vector<double>& detunings_hz, double t) {
    const int n = static_cast<int>(detunings_hz.size());
    const std::int64_t dim = pow3(n);
    Vector diag = Vector::Ones(dim);
    for (int s = 0; s < n; ++s) {
        const Eigen::Vector3cd d = dephasing_site_diag(detunings_hz[s], t);
        std::int64_t stride = pow3(s);
        for (std::int64_t k = 0; k < dim; ++k) diag(k) *= d((k / stride) % 3);
    }
    return diag.asDiagonal();
}

// Single-site leakage channel over time t at rate lambda: both qubit levels
// decay into |L> with probability p = 1 - exp(-lambda t).
inline std::vector<Matrix> leakage_kraus(double lambda, double t) {
    if (lambda < 0.0 || t < 0.0) throw std::invalid_argument("leakage_kraus: negative rate or time");
    const double p = 1.0 - std::exp(-lambda * t);
    Matrix k0 = Matrix::Identity(3, 3);
    k0(0, 0) = std::sqrt(1.0 - p);
    k0(1, 1) = std::sqrt(1.0 - p);
    Matrix k1 = Matrix::Zero(3, 3), k2 = Matrix::Zero(3, 3);
    k1(2, 0) = std::sqrt(p);
    k2(2, 1) = std::sqrt(p);
    return {k0, k1, k2};
}

namespace detail {

// exact OU update over dt, stationary initial condition
struct OuProcess {
    double sigma = 0.0, tau = 1.0, x = 0.0;

    void init(const OuParams& p, Rng& rng) {
        sigma = p.sigma_hz;
        tau = p.tau_s;
        if (tau <= 0.0) throw ConfigurationError("OU correlation time must be positive");
        std::normal_distribution<double> n(0.0, 1.0);
        x = sigma * n(rng);
    }
    void step(double dt, Rng& rng) {
        const double a = std::exp(-dt / tau);
        std::normal_distribution<double> n(0.0, 1.0);
        x = a * x + sigma * std::sqrt(1.0 - a * a) * n(rng);
    }
};

}  // namespace detail

// Per-ion OU detuning samples at times dt, 2dt, ..., n_steps*dt (row = step).
inline std::vector<std::vector<double>> ou_trajectory(const NoiseModel& model,
                                                      const FieldProfile& profile,
                                                      int n_steps, double dt, Rng& rng) {
    if (n_steps < 1 || dt <= 0.0) throw std::invalid_argument("ou_trajectory: bad step layout");
    const int n = static_cast<int>(profile.positions.size());
    const double xref = differential_xref(profile);
    detail::OuProcess common, diff;
    common.init(model.ou_common, rng);
    diff.init(model.ou_differential, rng);
    std::vector<std::vector<double>> out(n_steps, std::vector<double>(n, 0.0));
    for (int k = 0; k < n_steps; ++k) {
        common.step(dt, rng);
        diff.step(dt, rng);
        for (int i = 0; i < n; ++i)
            out[k][i] = common.x + diff.x * profile.positions[i] / xref;
    }
    return out;
}

namespace detail {

// elementwise diagonal-phase application: rho_ij *= d_i conj(d_j)
inline void apply_diag_phase(Register& reg, const Vector& diag) {
    const std::int64_t dim = reg.dim();
    for (std::int64_t j = 0; j < dim; ++j) {
        const Complex cj = std::conj(diag(j));
        for (std::int64_t i = 0; i < dim; ++i) reg.rho(i, j) *= diag(i) * cj;
    }
}

// elementwise single-site leakage with probability p, equivalent to
// apply_kraus with leakage_kraus but without the dense channel loop
inline void apply_leak_site(Register& reg, int site, double p) {
    if (p <= 0.0) return;
    const std::int64_t dim = reg.dim();
    const std::int64_t stride = pow3(site);
    const double keep = std::sqrt(1.0 - p);
    // off-diagonal-in-site and qubit-diagonal elements shrink; population moves to |L>
    for (std::int64_t j = 0; j < dim; ++j) {
        const int dj = static_cast<int>((j / stride) % 3);
        for (std::int64_t i = 0; i < dim; ++i) {
            const int di = static_cast<int>((i / stride) % 3);
            if (di == 2 && dj == 2) continue;
            if (di == 2 || dj == 2) {
                reg.rho(i, j) *= keep;
            } else if (di == dj) {
                // population transfer into the leaked level of this site
                const std::int64_t iL = i + (2 - di) * stride;
                const std::int64_t jL = j + (2 - dj) * stride;
                reg.rho(iL, jL) += p * reg.rho(i, j);
                reg.rho(i, j) *= 1.0 - p;
            } else {
                reg.rho(i, j) *= 1.0 - p;
            }
        }
    }
}

}  // namespace detail

// Free storage for time T under static field detunings, OU field noise and
// leakage, integrated in n_steps equal slices. With echo=true a Y pi pulse is
// applied to the memory ions at the midpoint, which requires an even number of
// steps. T=0 is an exact identity.
inline void storage_evolution_inplace(Register& reg, double T, const NoiseModel& model,
                                      const FieldProfile& profile, bool echo, int n_steps,
                                      Rng& rng) {
    if (T < 0.0) throw std::invalid_argument("storage time must be non-negative");
    if (T == 0.0) return;
    if (n_steps < 2) throw std::invalid_argument("storage_evolution needs at least 2 steps");
    if (echo && n_steps % 2 != 0)
        throw std::invalid_argument("echoed storage needs an even number of steps");
    if (static_cast<int>(profile.positions.size()) != reg.n_sites)
        throw ConfigurationError("field profile size does not match register");
    std::vector<double> mask = model.sensitivity;
    if (mask.empty()) mask.assign(reg.n_sites, 1.0);
    if (static_cast<int>(mask.size()) != reg.n_sites)
        throw ConfigurationError("sensitivity mask size does not match register");

    const std::vector<double> static_det = detuning_vector(profile);
    const double dt = T / n_steps;
    const double xref = differential_xref(profile);
    detail::OuProcess common, diff;
    common.init(model.ou_common, rng);
    diff.init(model.ou_differential, rng);

    const double p_leak = 1.0 - std::exp(-model.lambda_leak * dt);
    const std::int64_t dim = reg.dim();
    const std::vector<int> mem = reg.memory_sites();

    for (int k = 0; k < n_steps; ++k) {
        common.step(dt, rng);
        diff.step(dt, rng);
        Vector diag = Vector::Ones(dim);
        for (int s = 0; s < reg.n_sites; ++s) {
            const double delta =
                (static_det[s] + common.x + diff.x * profile.positions[s] / xref) * mask[s];
            if (delta == 0.0) continue;
            const Eigen::Vector3cd d = dephasing_site_diag(delta, dt);
            const std::int64_t stride = pow3(s);
            for (std::int64_t idx = 0; idx < dim; ++idx) diag(idx) *= d((idx / stride) % 3);
        }
        detail::apply_diag_phase(reg, diag);
        if (p_leak > 0.0)
            for (int s : mem) detail::apply_leak_site(reg, s, p_leak);
        if (echo && k + 1 == n_steps / 2) {
            const Matrix y = detail::qubit_rotation3(kPi, kPi / 2);
            for (int s : mem) apply_unitary_inplace(reg, y, {s});
        }
    }
}

inline Register storage_evolution(Register reg, double T, const NoiseModel& model,
                                  const FieldProfile& profile, bool echo, int n_steps, Rng& rng) {
    storage_evolution_inplace(reg, T, model, profile, echo, n_steps, rng);
    return reg;
}

}  // namespace iondfs
