#pragma once

#include "iondfs/circuits.hpp"
#include "iondfs/qstate.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace iondfs {

// Target Bell state of the physical register: memory sites carry
// (|1001> +- |0110>)/sqrt(2) for the psi family or (|1010> +- |0101>)/sqrt(2)
// for the phi family; every other site is in |0>.
inline Vector logical_target(BellTarget target, const Layout& layout = Layout::six_ion()) {
    const auto& m = layout.memory_sites;
    if (m.size() != 4) throw std::invalid_argument("logical_target needs four memory sites");
    const bool phi_family = target == BellTarget::PhiPlus || target == BellTarget::PhiMinus;
    const double sign = (target == BellTarget::PsiMinus || target == BellTarget::PhiMinus) ? -1.0 : 1.0;
    std::string a(layout.n_sites, '0'), b(layout.n_sites, '0');
    if (phi_family) {
        a[m[0]] = '1'; a[m[2]] = '1';
        b[m[1]] = '1'; b[m[3]] = '1';
    } else {
        a[m[0]] = '1'; a[m[3]] = '1';
        b[m[1]] = '1'; b[m[2]] = '1';
    }
    Vector v = Vector::Zero(pow3(layout.n_sites));
    v(basis_index(a)) = 1.0 / std::sqrt(2.0);
    v(basis_index(b)) = sign / std::sqrt(2.0);
    return v;
}

namespace detail {

inline std::string place_string(const std::string& core, const Layout& layout) {
    std::string s(layout.n_sites, 'I');
    for (std::size_t k = 0; k < core.size(); ++k) s[layout.memory_sites[k]] = core[k];
    return s;
}

}  // namespace detail

// Population component of the fidelity witness: projector onto the
// {|1001>, |0110>} (psi) or {|0000>, |1111>} (phi) span of the memory sites,
// written as eight weighted Z strings.
inline Observable observable_o1(StateFamily family, const Layout& layout = Layout::six_ion()) {
    Observable o;
    const double s = family == StateFamily::Psi ? 1.0 : -1.0;
    const double c = 1.0 / 8.0;
    auto add = [&](double w, const std::string& core) {
        o.terms.push_back({w, detail::place_string(core, layout)});
    };
    add(c, "IIII");
    add(c, "ZZZZ");
    add(s * c, "IZZI");
    add(s * c, "ZIIZ");
    add(-s * c, "ZIZI");
    add(-s * c, "IZIZ");
    add(-c, "ZZII");
    add(-c, "IIZZ");
    return o;
}

namespace detail {

// Analytic phase average of the parity-type witness terms. The analysis pulse
// measures P(phi + theta_k) = X cos(phi+theta_k) + Y sin(phi+theta_k) on
// memory site k; averaging cos(2phi)*product over phi keeps only the
// stationary components, giving a fixed combination of X/Y strings.
inline Observable phase_averaged_parity(const std::vector<double>& theta, const Layout& layout) {
    Observable o;
    for (int strmask = 0; strmask < 16; ++strmask) {
        std::string core = "IIII";
        // coefficient of this X/Y string: expand each factor into signed
        // exponentials of phi; only the zero-winding part survives the average
        Complex coeff = 0.0;
        for (int signs = 0; signs < 16; ++signs) {
            Complex prod = 1.0;
            int winding = 0;
            for (int k = 0; k < 4; ++k) {
                const double sg = (signs >> k) & 1 ? 1.0 : -1.0;
                winding += sg > 0 ? 1 : -1;
                const Complex e = std::exp(Complex(0.0, sg * theta[k]));
                if ((strmask >> k) & 1)
                    prod *= sg / 2.0 * e / Complex(0.0, 1.0);  // sin component -> Y
                else
                    prod *= 0.5 * e;  // cos component -> X
            }
            if (winding == 0) coeff += prod;
        }
        if (std::abs(coeff.imag()) > 1e-12) throw std::runtime_error("parity coefficient not real");
        if (std::abs(coeff.real()) < 1e-14) continue;
        for (int k = 0; k < 4; ++k) core[k] = (strmask >> k) & 1 ? 'Y' : 'X';
        o.terms.push_back({coeff.real(), detail::place_string(core, layout)});
    }
    return o;
}

inline std::vector<double> o3_shifts(StateFamily family) {
    return family == StateFamily::Psi ? std::vector<double>{0.0, kPi / 2, kPi / 2, 0.0}
                                      : std::vector<double>{0.0, kPi / 2, 0.0, kPi / 2};
}

}  // namespace detail

inline Observable observable_o2(const Layout& layout = Layout::six_ion()) {
    return detail::phase_averaged_parity({0.0, 0.0, 0.0, 0.0}, layout);
}

inline Observable observable_o3(StateFamily family, const Layout& layout = Layout::six_ion()) {
    return detail::phase_averaged_parity(detail::o3_shifts(family), layout);
}

inline double ghz_fidelity_analytic(const Register& reg, StateFamily family,
                                    const Layout& layout = Layout::six_ion()) {
    const double o1 = expectation(reg, observable_o1(family, layout));
    const double o2 = expectation(reg, observable_o2(layout));
    const double o3 = expectation(reg, observable_o3(family, layout));
    return (2.0 * o1 + o2 - o3) / 4.0;
}

struct TermEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int shots = 0;
    int discarded_leak = 0;
    // shots agreeing with the ideal +-state sign of this term
    // (O1: population hit, O2: parity +1, O3: parity -1)
    int n_agree = 0;
};

struct FidelityEstimate {
    TermEstimate o1, o2, o3;
    double fidelity = 0.0;
    double fidelity_stderr = 0.0;
};

namespace detail {

// pure-state application of the analysis ops (rotations and Rz only)
inline void apply_analysis_to_ket(Vector& psi, const Circuit& c, const std::vector<SiteType>& types) {
    const int n = static_cast<int>(types.size());
    auto apply_site = [&](const Matrix& u, int site) {
        const std::int64_t stride = pow3(site);
        const std::int64_t dim = psi.size();
        for (std::int64_t base = 0; base < dim; ++base) {
            if ((base / stride) % 3 != 0) continue;
            const Complex a0 = psi(base), a1 = psi(base + stride), a2 = psi(base + 2 * stride);
            psi(base) = u(0, 0) * a0 + u(0, 1) * a1 + u(0, 2) * a2;
            psi(base + stride) = u(1, 0) * a0 + u(1, 1) * a1 + u(1, 2) * a2;
            psi(base + 2 * stride) = u(2, 0) * a0 + u(2, 1) * a1 + u(2, 2) * a2;
        }
    };
    for (const GateOp& op : c.ops) {
        if (const auto* g = std::get_if<GlobalRot>(&op)) {
            const Matrix u = qubit_rotation3(g->angle, effective_phase(*g));
            for (int s = 0; s < n; ++s)
                if (types[s] == g->target_type) apply_site(u, s);
        } else if (const auto* z = std::get_if<Rz>(&op)) {
            apply_site(rz3(z->angle), z->site);
        } else {
            throw std::invalid_argument("analysis circuits may contain only rotations");
        }
    }
}

inline std::string ket_sample_zbasis(const Vector& psi, const std::vector<int>& sites, int n_sites,
                                     Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng) * psi.squaredNorm();
    std::int64_t picked = psi.size() - 1;
    for (std::int64_t k = 0; k < psi.size(); ++k) {
        r -= std::norm(psi(k));
        if (r <= 0.0) { picked = k; break; }
    }
    std::string out(sites.size(), '0');
    Register probe;
    probe.n_sites = n_sites;
    for (std::size_t k = 0; k < sites.size(); ++k) out[k] = "01L"[probe.digit(picked, sites[k])];
    return out;
}

struct EigenEnsemble {
    std::vector<double> weights;
    std::vector<Vector> kets;

    explicit EigenEnsemble(const Register& reg) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (reg.rho + reg.rho.adjoint()));
        for (std::int64_t k = 0; k < es.eigenvalues().size(); ++k) {
            const double w = es.eigenvalues()(k);
            if (w > 1e-12) {
                weights.push_back(w);
                kets.push_back(es.eigenvectors().col(k));
            }
        }
    }
};

}  // namespace detail

// Monte Carlo estimate of one witness term by simulated projective shots.
// For O1 the per-shot value is the population indicator of the target span;
// for O2/O3 the analysis phase is drawn uniformly per shot, the register is
// rotated, and the shot value is the memory-site parity. Shots that read out
// a leaked level are discarded.
inline TermEstimate estimate_mc(const Register& reg, FidelityTerm which, StateFamily family,
                                int shots, Rng& rng, const Layout& layout = Layout::six_ion()) {
    if (shots < 1) throw std::invalid_argument("estimate_mc needs at least one shot");
    detail::EigenEnsemble ens(reg);
    std::discrete_distribution<std::size_t> pick(ens.weights.begin(), ens.weights.end());
    std::uniform_real_distribution<double> uphi(0.0, 2.0 * kPi);

    TermEstimate est;
    double sum = 0.0, sumsq = 0.0;
    int kept = 0;
    for (int shot = 0; shot < shots; ++shot) {
        Vector psi = ens.kets[pick(rng)];
        double phi = 0.0;
        if (which != FidelityTerm::O1) {
            phi = uphi(rng);
            const Circuit c = build_analysis_circuit(which, phi, family, layout);
            detail::apply_analysis_to_ket(psi, c, reg.types);
        }
        const std::string out =
            detail::ket_sample_zbasis(psi, layout.memory_sites, layout.n_sites, rng);
        if (out.find('L') != std::string::npos) {
            ++est.discarded_leak;
            continue;
        }
        double value;
        if (which == FidelityTerm::O1) {
            const bool phi_family = family == StateFamily::Phi;
            value = (phi_family ? (out == "1010" || out == "0101")
                                : (out == "1001" || out == "0110"))
                        ? 1.0
                        : 0.0;
        } else {
            int ones = 0;
            for (char ch : out) ones += ch == '1';
            // phase-averaged parity; the uniform phi draw performs the average
            value = ones % 2 == 0 ? 1.0 : -1.0;
        }
        sum += value;
        sumsq += value * value;
        if (which == FidelityTerm::O3 ? value < 0.0 : value > 0.0) ++est.n_agree;
        ++kept;
    }
    if (kept == 0) throw std::runtime_error("all shots discarded by leakage");
    est.shots = kept;
    est.mean = sum / kept;
    const double var = kept > 1 ? (sumsq - sum * sum / kept) / (kept - 1) : 0.0;
    est.std_error = std::sqrt(std::max(var, 0.0) / kept);
    return est;
}

inline FidelityEstimate ghz_fidelity_mc(const Register& reg, StateFamily family, int shots_per_term,
                                        Rng& rng, const Layout& layout = Layout::six_ion()) {
    FidelityEstimate f;
    f.o1 = estimate_mc(reg, FidelityTerm::O1, family, shots_per_term, rng, layout);
    f.o2 = estimate_mc(reg, FidelityTerm::O2, family, shots_per_term, rng, layout);
    f.o3 = estimate_mc(reg, FidelityTerm::O3, family, shots_per_term, rng, layout);
    f.fidelity = (2.0 * f.o1.mean + f.o2.mean - f.o3.mean) / 4.0;
    f.fidelity_stderr = std::sqrt(4.0 * f.o1.std_error * f.o1.std_error + f.o2.std_error * f.o2.std_error +
                                  f.o3.std_error * f.o3.std_error) /
                        4.0;
    return f;
}

// Parity oscillation signal: expectation of the memory-site Z parity after a
// global pi/2 analysis pulse at phase phi.
inline double parity_expectation(const Register& reg, double phi,
                                 const Layout& layout = Layout::six_ion()) {
    Register work = reg;
    Circuit c;
    c.n_sites = layout.n_sites;
    c.ops.push_back(GlobalRot{RotAxis::X, kPi / 2, phi + kPi / 2, SiteType::S});
    run_circuit_inplace(work, c);
    Observable o;
    std::string z(layout.memory_sites.size(), 'Z');
    o.terms.push_back({1.0, detail::place_string(z, layout)});
    return expectation(work, o);
}

}  // namespace iondfs
