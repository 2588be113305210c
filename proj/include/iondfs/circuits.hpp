#pragma once

#include "iondfs/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <variant>

namespace iondfs {

inline constexpr double kPi = std::numbers::pi;

enum class RotAxis { X, Y };
enum class BellTarget { PsiPlus, PsiMinus, PhiPlus, PhiMinus };
enum class StateFamily { Psi, Phi };
enum class FidelityTerm { O1, O2, O3 };

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Native gate vocabulary. GlobalRot acts on every unshelved site whose type
// label matches target_type; Rzz with with_echo_byproduct carries the
// microwave-echo side effect of a Y rotation on every unshelved site.
struct GlobalRot {
    RotAxis axis = RotAxis::X;
    double angle = 0.0;
    double phase = 0.0;
    SiteType target_type = SiteType::S;
};
struct Rz {
    int site = 0;
    double angle = 0.0;
};
struct Rzz {
    int site_i = 0;
    int site_j = 0;
    double angle = -kPi / 2;  // restricted to +-pi/2
    bool with_echo_byproduct = true;
};
struct EchoPi {
    SiteType target_type = SiteType::F;
};
struct Shelve {
    int site = 0;
};
struct Unshelve {
    int site = 0;
};
struct ConvertType {
    std::vector<int> sites;
    SiteType from = SiteType::S;
    SiteType to = SiteType::F;
};

using GateOp = std::variant<GlobalRot, Rz, Rzz, EchoPi, Shelve, Unshelve, ConvertType>;

struct Circuit {
    int n_sites = 0;
    std::vector<GateOp> ops;
};

// Memory-site layout of a register; entry k of memory_sites is logical qubit
// q_{k+1} of the four-ion encoding.
struct Layout {
    int n_sites = 6;
    std::vector<int> memory_sites = {1, 2, 3, 4};

    static Layout six_ion() { return {}; }
    static Layout bare(int n) {
        Layout l;
        l.n_sites = n;
        l.memory_sites.resize(n);
        for (int i = 0; i < n; ++i) l.memory_sites[i] = i;
        return l;
    }
    std::vector<SiteRole> roles() const {
        std::vector<SiteRole> r(n_sites, SiteRole::Coolant);
        for (int s : memory_sites) r[s] = SiteRole::Memory;
        return r;
    }
};

namespace detail {

inline Matrix qubit_rotation3(double angle, double phase) {
    // exp(-i angle/2 (X cos(phase) + Y sin(phase))) on the qubit block, identity on |L>
    Matrix u = Matrix::Identity(3, 3);
    const double c = std::cos(angle / 2), s = std::sin(angle / 2);
    const Complex i(0.0, 1.0);
    u(0, 0) = c;
    u(1, 1) = c;
    u(0, 1) = -i * s * std::exp(-i * phase);
    u(1, 0) = -i * s * std::exp(i * phase);
    return u;
}

inline Matrix rz3(double angle) {
    Matrix u = Matrix::Identity(3, 3);
    const Complex i(0.0, 1.0);
    u(0, 0) = std::exp(-i * (angle / 2));
    u(1, 1) = std::exp(i * (angle / 2));
    return u;
}

inline double effective_phase(const GlobalRot& g) {
    return g.phase + (g.axis == RotAxis::Y ? kPi / 2 : 0.0);
}

inline std::vector<int> matching_sites(const Register& reg, SiteType t) {
    std::vector<int> out;
    for (int s = 0; s < reg.n_sites; ++s)
        if (reg.types[s] == t) out.push_back(s);
    return out;
}

}  // namespace detail

// Full-register unitary of a single op, given the per-site type labels.
// Shelve/Unshelve/ConvertType are label transitions and return identity.
inline Matrix gate_unitary(const GateOp& op, int n_sites, const std::vector<SiteType>& types) {
    const std::int64_t dim = pow3(n_sites);
    Matrix u = Matrix::Identity(dim, dim);
    auto embed_site = [&](const Matrix& m, int site) {
        Matrix full = Matrix::Zero(dim, dim);
        detail::SiteIndexer ix(n_sites, {site});
        for (std::int64_t a = 0; a < 3; ++a)
            for (std::int64_t b = 0; b < 3; ++b)
                for (std::int64_t r = 0; r < ix.rest_dim; ++r)
                    full(ix.full(a, r), ix.full(b, r)) = m(a, b);
        return full;
    };
    if (const auto* g = std::get_if<GlobalRot>(&op)) {
        const Matrix m = detail::qubit_rotation3(g->angle, detail::effective_phase(*g));
        for (int s = 0; s < n_sites; ++s)
            if (types[s] == g->target_type) u = embed_site(m, s) * u;
    } else if (const auto* z = std::get_if<Rz>(&op)) {
        u = embed_site(detail::rz3(z->angle), z->site);
    } else if (const auto* zz = std::get_if<Rzz>(&op)) {
        if (zz->site_i == zz->site_j) throw std::invalid_argument("Rzz requires distinct sites");
        Matrix full = Matrix::Zero(dim, dim);
        const Complex i(0.0, 1.0);
        Register probe;  // digit helper only
        probe.n_sites = n_sites;
        for (std::int64_t k = 0; k < dim; ++k) {
            const int di = probe.digit(k, zz->site_i), dj = probe.digit(k, zz->site_j);
            const double zi = di == 1 ? -1.0 : 1.0;  // Z = identity on |L>
            const double zj = dj == 1 ? -1.0 : 1.0;
            full(k, k) = std::exp(-i * (zz->angle / 2) * zi * zj);
        }
        u = full;
        if (zz->with_echo_byproduct) {
            const Matrix y3 = pauli_site('Y');
            Matrix byproduct = Matrix::Identity(dim, dim);
            for (int s = 0; s < n_sites; ++s)
                if (types[s] != SiteType::ShelvedD) byproduct = embed_site(y3, s) * byproduct;
            u = u * byproduct;
        }
    } else if (const auto* e = std::get_if<EchoPi>(&op)) {
        const Matrix m = detail::qubit_rotation3(kPi, kPi / 2);
        for (int s = 0; s < n_sites; ++s)
            if (types[s] == e->target_type) u = embed_site(m, s) * u;
    }
    return u;
}

// Per-gate noise applied by run_circuit: two-site depolarizing of strength p2
// after every Rzz, per-site dephasing of strength p1 after every GlobalRot.
struct GateNoise {
    double p1 = 0.0;
    double p2 = 0.0;
};

// Depolarizing strength that reproduces a given Bell-pair fidelity for one
// Rzz gate: F = 1 - (4/5) p.
inline double depolarizing_from_bell_fidelity(double bell_fidelity) {
    if (bell_fidelity < 0.0 || bell_fidelity > 1.0) throw std::invalid_argument("bell fidelity out of range");
    return (1.0 - bell_fidelity) * 5.0 / 4.0;
}

namespace detail {

inline std::vector<Matrix> dephasing_site_kraus(double p) {
    Matrix z = pauli_site('Z');
    return {std::sqrt(1.0 - p) * Matrix::Identity(3, 3), std::sqrt(p) * z};
}

inline std::vector<Matrix> depolarizing_pair_kraus(double p) {
    std::vector<Matrix> ks;
    ks.push_back(std::sqrt(1.0 - p) * Matrix::Identity(9, 9));
    const char paulis[] = {'I', 'X', 'Y', 'Z'};
    for (char a : paulis)
        for (char b : paulis) {
            if (a == 'I' && b == 'I') continue;
            Matrix k = Matrix::Zero(9, 9);
            const Matrix pa = pauli_site(a), pb = pauli_site(b);
            // site order: first listed site = least significant trit
            for (int ia = 0; ia < 3; ++ia)
                for (int ib = 0; ib < 3; ++ib)
                    for (int ja = 0; ja < 3; ++ja)
                        for (int jb = 0; jb < 3; ++jb)
                            k(ib * 3 + ia, jb * 3 + ja) = pa(ia, ja) * pb(ib, jb);
            ks.push_back(std::sqrt(p / 15.0) * k);
        }
    return ks;
}

inline void check_unshelved(const Register& reg, int site, const char* gate) {
    if (reg.types[site] == SiteType::ShelvedD)
        throw ProtocolError(std::string(gate) + " addresses shelved site " + std::to_string(site));
}

}  // namespace detail

inline void run_circuit_inplace(Register& reg, const Circuit& c,
                                std::optional<GateNoise> gate_noise = std::nullopt) {
    if (c.n_sites != reg.n_sites) throw std::invalid_argument("circuit size mismatch");
    for (const GateOp& op : c.ops) {
        if (const auto* g = std::get_if<GlobalRot>(&op)) {
            const Matrix m = detail::qubit_rotation3(g->angle, detail::effective_phase(*g));
            for (int s = 0; s < reg.n_sites; ++s) {
                if (reg.types[s] != g->target_type) continue;
                apply_unitary_inplace(reg, m, {s});
                if (gate_noise && gate_noise->p1 > 0.0)
                    apply_kraus_inplace(reg, detail::dephasing_site_kraus(gate_noise->p1), {s});
            }
        } else if (const auto* z = std::get_if<Rz>(&op)) {
            detail::check_unshelved(reg, z->site, "Rz");
            apply_unitary_inplace(reg, detail::rz3(z->angle), {z->site});
        } else if (const auto* zz = std::get_if<Rzz>(&op)) {
            if (zz->site_i == zz->site_j) throw std::invalid_argument("Rzz requires distinct sites");
            detail::check_unshelved(reg, zz->site_i, "Rzz");
            detail::check_unshelved(reg, zz->site_j, "Rzz");
            const Matrix u = gate_unitary(op, reg.n_sites, reg.types);
            // diagonal phase + optional global byproduct; applied as one full unitary
            reg.rho = u * reg.rho * u.adjoint();
            if (gate_noise && gate_noise->p2 > 0.0)
                apply_kraus_inplace(reg, detail::depolarizing_pair_kraus(gate_noise->p2),
                                    {zz->site_i, zz->site_j});
        } else if (const auto* e = std::get_if<EchoPi>(&op)) {
            const Matrix m = detail::qubit_rotation3(kPi, kPi / 2);
            for (int s = 0; s < reg.n_sites; ++s)
                if (reg.types[s] == e->target_type) apply_unitary_inplace(reg, m, {s});
        } else if (const auto* sh = std::get_if<Shelve>(&op)) {
            detail::check_unshelved(reg, sh->site, "Shelve");
            reg.types[sh->site] = SiteType::ShelvedD;
        } else if (const auto* un = std::get_if<Unshelve>(&op)) {
            if (reg.types[un->site] != SiteType::ShelvedD)
                throw ProtocolError("Unshelve on a site that is not shelved");
            reg.types[un->site] = SiteType::S;
        } else if (const auto* cv = std::get_if<ConvertType>(&op)) {
            for (int s : cv->sites) {
                if (reg.types[s] != cv->from) throw ProtocolError("ConvertType from wrong label");
                reg.types[s] = cv->to;
            }
        }
    }
}

inline Register run_circuit(Register reg, const Circuit& c,
                            std::optional<GateNoise> gate_noise = std::nullopt) {
    run_circuit_inplace(reg, c, gate_noise);
    return reg;
}

namespace detail {

// Ideal gate list for the CNOT-ladder preparation, before accounting for the
// Rzz echo byproducts. Entries: global rotations, single-site Rz, bare Rzz.
struct IdealOp {
    enum Kind { Global, SingleZ, PairZZ } kind;
    double angle = 0.0;
    double phase = 0.0;  // Global only
    int a = 0, b = 0;
};

inline std::vector<IdealOp> h_gate(int t) {
    // H_t = R_Y(pi/2)_t Z_t, with the individual R_Y built from a global X sandwich
    return {{IdealOp::SingleZ, kPi, 0.0, t},
            {IdealOp::Global, kPi / 2, 0.0},
            {IdealOp::SingleZ, -kPi / 2, 0.0, t},
            {IdealOp::Global, -kPi / 2, 0.0}};
}

inline std::vector<IdealOp> cz_gate(int c, int t) {
    return {{IdealOp::SingleZ, kPi / 2, 0.0, c},
            {IdealOp::SingleZ, kPi / 2, 0.0, t},
            {IdealOp::PairZZ, -kPi / 2, 0.0, c, t}};
}

inline void append(std::vector<IdealOp>& ops, const std::vector<IdealOp>& more) {
    ops.insert(ops.end(), more.begin(), more.end());
}

}  // namespace detail

// Bell-state preparation on the six-ion layout [C,M,M,M,M,C].
//
// The ladder |+>_{q1} -> CNOT(q1,q2) -> CNOT(q2,q4) -> CNOT(q4,q3) builds the
// GHZ-type state, and a final X on q1 and q4 maps it to psi+; moving the
// X-layer Rz(pi) from q4 to q3 gives phi+ instead, and a trailing Rz(pi) on
// q1 turns either + state into its - partner. Each emitted Rzz carries the
// echo byproduct (global Y), compensated by sign-conjugating every later
// rotation and closing with one global Y pi pulse.
inline Circuit build_prep_circuit(BellTarget target, const Layout& layout = Layout::six_ion()) {
    using detail::IdealOp;
    const auto& m = layout.memory_sites;
    if (m.size() != 4) throw std::invalid_argument("prep circuit needs a four-memory-site layout");
    const int q1 = m[0], q2 = m[1], q3 = m[2], q4 = m[3];
    const bool phi_family = target == BellTarget::PhiPlus || target == BellTarget::PhiMinus;
    const bool minus = target == BellTarget::PsiMinus || target == BellTarget::PhiMinus;
    const int red_site = phi_family ? q3 : q4;

    std::vector<IdealOp> ideal;
    // |+> on q1
    detail::append(ideal, {{IdealOp::Global, kPi / 2, 0.0},
                           {IdealOp::SingleZ, -kPi / 2, 0.0, q1},
                           {IdealOp::Global, -kPi / 2, 0.0}});
    auto cnot = [&](int c, int t) {
        detail::append(ideal, detail::h_gate(t));
        detail::append(ideal, detail::cz_gate(c, t));
        detail::append(ideal, detail::h_gate(t));
    };
    cnot(q1, q2);
    cnot(q2, q4);
    cnot(q4, q3);
    // X on q1 and on the red-box site, via a global Y sandwich
    detail::append(ideal, {{IdealOp::Global, kPi / 2, kPi / 2},
                           {IdealOp::SingleZ, kPi, 0.0, q1},
                           {IdealOp::SingleZ, kPi, 0.0, red_site},
                           {IdealOp::Global, -kPi / 2, kPi / 2}});

    // conjugate by the accumulated Y byproducts of all earlier Rzz gates
    Circuit c;
    c.n_sites = layout.n_sites;
    int zz_before = 0;
    for (const IdealOp& op : ideal) {
        const bool flip = (zz_before % 2) == 1;
        switch (op.kind) {
            case IdealOp::Global:
                c.ops.push_back(GlobalRot{RotAxis::X, op.angle,
                                          flip ? kPi - op.phase : op.phase, SiteType::S});
                break;
            case IdealOp::SingleZ:
                c.ops.push_back(Rz{op.a, flip ? -op.angle : op.angle});
                break;
            case IdealOp::PairZZ:
                c.ops.push_back(Rzz{op.a, op.b, op.angle, true});
                ++zz_before;
                break;
        }
    }
    // coolant compensation, then the closing global Y pi absorbing Y^3
    if (layout.n_sites == 6) {
        c.ops.push_back(Rz{0, 3 * kPi / 2});
        c.ops.push_back(Rz{5, 3 * kPi / 2});
    }
    c.ops.push_back(GlobalRot{RotAxis::Y, kPi, 0.0, SiteType::S});
    if (minus) c.ops.push_back(Rz{q1, kPi});
    return c;
}

// Analysis circuits of the three-term fidelity decomposition. O1 measures
// directly in the Z basis; O2 adds the global pi/2 pulse at phase phi; O3
// additionally shifts the analysis phase of the central pair by pi/2.
inline Circuit build_analysis_circuit(FidelityTerm which, double phi,
                                      StateFamily family = StateFamily::Psi,
                                      const Layout& layout = Layout::six_ion(),
                                      SiteType target_type = SiteType::S) {
    if (phi < 0.0 || phi >= 2 * kPi) phi = phi - 2 * kPi * std::floor(phi / (2 * kPi));
    Circuit c;
    c.n_sites = layout.n_sites;
    if (which == FidelityTerm::O1) return c;
    if (which == FidelityTerm::O3) {
        const auto& m = layout.memory_sites;
        if (m.size() != 4) throw std::invalid_argument("O3 needs four memory sites");
        if (family == StateFamily::Psi) {
            c.ops.push_back(Rz{m[1], kPi / 2});
            c.ops.push_back(Rz{m[2], kPi / 2});
        } else {
            c.ops.push_back(Rz{m[1], kPi / 2});
            c.ops.push_back(Rz{m[3], kPi / 2});
        }
    }
    // pi/2 pulse along (-sin phi, cos phi): measured single-site operator
    // becomes X cos(phi) + Y sin(phi)
    c.ops.push_back(GlobalRot{RotAxis::X, kPi / 2, phi + kPi / 2, target_type});
    return c;
}

// --- text serialization -----------------------------------------------------

inline std::string type_token(SiteType t) {
    switch (t) {
        case SiteType::S: return "S";
        case SiteType::F: return "F";
        default: return "D";
    }
}

inline SiteType type_from_token(const std::string& s) {
    if (s == "S") return SiteType::S;
    if (s == "F") return SiteType::F;
    if (s == "D") return SiteType::ShelvedD;
    throw std::invalid_argument("unknown site type token: " + s);
}

inline std::string to_text(const Circuit& c) {
    std::ostringstream os;
    os.precision(17);
    os << "sites " << c.n_sites << "\n";
    for (const GateOp& op : c.ops) {
        if (const auto* g = std::get_if<GlobalRot>(&op)) {
            os << "grot " << (g->axis == RotAxis::X ? "X" : "Y") << " " << g->angle << " "
               << g->phase << " " << type_token(g->target_type) << "\n";
        } else if (const auto* z = std::get_if<Rz>(&op)) {
            os << "rz " << z->site << " " << z->angle << "\n";
        } else if (const auto* zz = std::get_if<Rzz>(&op)) {
            os << "rzz " << zz->site_i << " " << zz->site_j << " " << zz->angle << " "
               << (zz->with_echo_byproduct ? "echo" : "bare") << "\n";
        } else if (const auto* e = std::get_if<EchoPi>(&op)) {
            os << "echopi " << type_token(e->target_type) << "\n";
        } else if (const auto* sh = std::get_if<Shelve>(&op)) {
            os << "shelve " << sh->site << "\n";
        } else if (const auto* un = std::get_if<Unshelve>(&op)) {
            os << "unshelve " << un->site << "\n";
        } else if (const auto* cv = std::get_if<ConvertType>(&op)) {
            os << "convert " << type_token(cv->from) << " " << type_token(cv->to);
            for (int s : cv->sites) os << " " << s;
            os << "\n";
        }
    }
    return os.str();
}

inline Circuit from_text(const std::string& text) {
    Circuit c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "sites") {
            ls >> c.n_sites;
        } else if (word == "grot") {
            std::string axis, type;
            double angle, phase;
            ls >> axis >> angle >> phase >> type;
            c.ops.push_back(GlobalRot{axis == "X" ? RotAxis::X : RotAxis::Y, angle, phase,
                                      type_from_token(type)});
        } else if (word == "rz") {
            int site; double angle;
            ls >> site >> angle;
            c.ops.push_back(Rz{site, angle});
        } else if (word == "rzz") {
            int i, j; double angle; std::string echo;
            ls >> i >> j >> angle >> echo;
            c.ops.push_back(Rzz{i, j, angle, echo == "echo"});
        } else if (word == "echopi") {
            std::string type;
            ls >> type;
            c.ops.push_back(EchoPi{type_from_token(type)});
        } else if (word == "shelve") {
            int site; ls >> site;
            c.ops.push_back(Shelve{site});
        } else if (word == "unshelve") {
            int site; ls >> site;
            c.ops.push_back(Unshelve{site});
        } else if (word == "convert") {
            std::string from, to;
            ls >> from >> to;
            ConvertType cv;
            cv.from = type_from_token(from);
            cv.to = type_from_token(to);
            int s;
            while (ls >> s) cv.sites.push_back(s);
            c.ops.push_back(cv);
        } else {
            throw std::invalid_argument("unknown circuit op: " + word);
        }
        if (ls.fail() && word != "convert") throw std::invalid_argument("malformed circuit line: " + line);
    }
    return c;
}

}  // namespace iondfs
