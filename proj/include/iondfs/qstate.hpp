#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iondfs {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Rng = std::mt19937_64;

// Per-site basis order |0>, |1>, |L>. Site 0 is the least significant trit.
inline constexpr int kSiteDim = 3;

enum class SiteRole { Memory, Coolant };
enum class SiteType { S, F, ShelvedD };

inline std::int64_t pow3(int n) {
    std::int64_t d = 1;
    for (int i = 0; i < n; ++i) d *= 3;
    return d;
}

// Dense density matrix over a register of three-level sites.
struct Register {
    int n_sites = 0;
    std::vector<SiteRole> roles;
    std::vector<SiteType> types;
    Matrix rho;

    std::int64_t dim() const { return pow3(n_sites); }

    int digit(std::int64_t index, int site) const {
        for (int s = 0; s < site; ++s) index /= 3;
        return static_cast<int>(index % 3);
    }

    std::vector<int> memory_sites() const {
        std::vector<int> out;
        for (int s = 0; s < n_sites; ++s)
            if (roles[s] == SiteRole::Memory) out.push_back(s);
        return out;
    }

    double trace_error() const { return std::abs(rho.trace().real() - 1.0) + std::abs(rho.trace().imag()); }

    double hermiticity_error() const {
        return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    void check_valid(double tol = 1e-9) const {
        if (trace_error() > tol) throw std::runtime_error("register trace deviates from 1");
        if (hermiticity_error() > tol) throw std::runtime_error("register density matrix not Hermitian");
    }
};

// index of the product basis state given per-site digits (digits[site])
inline std::int64_t basis_index(const std::vector<int>& digits) {
    std::int64_t idx = 0;
    for (int s = static_cast<int>(digits.size()) - 1; s >= 0; --s) idx = idx * 3 + digits[s];
    return idx;
}

// "01L0" -> digits per site, character k addresses site k
inline std::int64_t basis_index(const std::string& s) {
    std::vector<int> d(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        switch (s[k]) {
            case '0': d[k] = 0; break;
            case '1': d[k] = 1; break;
            case 'L': d[k] = 2; break;
            default: throw std::invalid_argument("basis string may contain only 0, 1, L");
        }
    }
    return basis_index(d);
}

inline Vector basis_ket(int n_sites, const std::string& s) {
    if (static_cast<int>(s.size()) != n_sites) throw std::invalid_argument("basis string length mismatch");
    Vector v = Vector::Zero(pow3(n_sites));
    v(basis_index(s)) = 1.0;
    return v;
}

inline Register init_register(int n, std::vector<SiteRole> roles = {}) {
    if (n < 1) throw std::invalid_argument("init_register: n must be >= 1");
    if (roles.empty()) roles.assign(n, SiteRole::Memory);
    if (static_cast<int>(roles.size()) != n) throw std::invalid_argument("init_register: roles size mismatch");
    Register reg;
    reg.n_sites = n;
    reg.roles = std::move(roles);
    reg.types.assign(n, SiteType::S);
    reg.rho = Matrix::Zero(pow3(n), pow3(n));
    reg.rho(0, 0) = 1.0;
    return reg;
}

inline Register register_from_pure(const Vector& psi, std::vector<SiteRole> roles = {}) {
    int n = 0;
    std::int64_t d = psi.size();
    while (d > 1) { d /= 3; ++n; }
    if (pow3(n) != psi.size()) throw std::invalid_argument("state dimension is not a power of 3");
    Register reg = init_register(n, std::move(roles));
    reg.rho = psi * psi.adjoint();
    return reg;
}

namespace detail {

// Index maps for embedding an operator acting on `sites` into the full register:
// full index = interleave(sub index over sites, rest index over remaining sites).
struct SiteIndexer {
    std::int64_t sub_dim;
    std::int64_t rest_dim;
    std::vector<std::int64_t> offset;  // offset[sub * rest_dim + rest] = full index

    SiteIndexer(int n_sites, const std::vector<int>& sites) {
        const int k = static_cast<int>(sites.size());
        sub_dim = pow3(k);
        const std::int64_t dim = pow3(n_sites);
        rest_dim = dim / sub_dim;
        std::vector<bool> on(n_sites, false);
        for (int s : sites) {
            if (s < 0 || s >= n_sites) throw std::invalid_argument("site index out of range");
            if (on[s]) throw std::invalid_argument("repeated site index");
            on[s] = true;
        }
        std::vector<std::int64_t> site_stride(k), rest_stride;
        {
            std::int64_t stride = 1;
            for (int s = 0; s < n_sites; ++s) {
                bool is_target = false;
                for (int t = 0; t < k; ++t)
                    if (sites[t] == s) { site_stride[t] = stride; is_target = true; }
                if (!is_target) rest_stride.push_back(stride);
                stride *= 3;
            }
        }
        offset.resize(sub_dim * rest_dim);
        for (std::int64_t sub = 0; sub < sub_dim; ++sub) {
            std::int64_t base = 0, q = sub;
            for (int t = 0; t < k; ++t) { base += (q % 3) * site_stride[t]; q /= 3; }
            for (std::int64_t r = 0; r < rest_dim; ++r) {
                std::int64_t full = base, qr = r;
                for (std::int64_t st : rest_stride) { full += (qr % 3) * st; qr /= 3; }
                offset[sub * rest_dim + r] = full;
            }
        }
    }

    std::int64_t full(std::int64_t sub, std::int64_t rest) const { return offset[sub * rest_dim + rest]; }
};

// out = (U x I_rest) * in, with U acting on the given sites
inline Matrix left_apply(const Matrix& u, const Matrix& in, const SiteIndexer& ix) {
    Matrix out = Matrix::Zero(in.rows(), in.cols());
    for (std::int64_t a = 0; a < ix.sub_dim; ++a)
        for (std::int64_t b = 0; b < ix.sub_dim; ++b) {
            const Complex c = u(a, b);
            if (c == Complex(0.0)) continue;
            for (std::int64_t r = 0; r < ix.rest_dim; ++r)
                out.row(ix.full(a, r)) += c * in.row(ix.full(b, r));
        }
    return out;
}

}  // namespace detail

inline void check_unitary(const Matrix& u, double tol = 1e-10) {
    if (u.rows() != u.cols()) throw std::invalid_argument("operator must be square");
    const double err = (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
    if (err > tol) throw std::invalid_argument("operator is not unitary");
}

inline void apply_unitary_inplace(Register& reg, const Matrix& u, const std::vector<int>& sites) {
    detail::SiteIndexer ix(reg.n_sites, sites);
    if (u.rows() != ix.sub_dim) throw std::invalid_argument("unitary dimension does not match site count");
    check_unitary(u);
    reg.rho = detail::left_apply(u, reg.rho, ix);
    reg.rho = detail::left_apply(u, reg.rho.adjoint().eval(), ix).adjoint();
}

inline Register apply_unitary(Register reg, const Matrix& u, const std::vector<int>& sites) {
    apply_unitary_inplace(reg, u, sites);
    return reg;
}

inline void apply_kraus_inplace(Register& reg, const std::vector<Matrix>& kraus, const std::vector<int>& sites) {
    detail::SiteIndexer ix(reg.n_sites, sites);
    if (kraus.empty()) throw std::invalid_argument("empty Kraus set");
    Matrix sum = Matrix::Zero(ix.sub_dim, ix.sub_dim);
    for (const Matrix& k : kraus) {
        if (k.rows() != ix.sub_dim || k.cols() != ix.sub_dim)
            throw std::invalid_argument("Kraus operator dimension mismatch");
        sum += k.adjoint() * k;
    }
    if ((sum - Matrix::Identity(ix.sub_dim, ix.sub_dim)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("Kraus set is not trace preserving");
    Matrix acc = Matrix::Zero(reg.rho.rows(), reg.rho.cols());
    for (const Matrix& k : kraus) {
        Matrix t = detail::left_apply(k, reg.rho, ix);
        acc += detail::left_apply(k, t.adjoint().eval(), ix).adjoint();
    }
    reg.rho = std::move(acc);
}

inline Register apply_kraus(Register reg, const std::vector<Matrix>& kraus, const std::vector<int>& sites) {
    apply_kraus_inplace(reg, kraus, sites);
    return reg;
}

// Weighted sum of Pauli strings; Pauli operators act on the {|0>,|1>} subspace
// and as identity on |L>.
struct Observable {
    struct Term {
        double coeff;
        std::string paulis;  // one of I,X,Y,Z per site, character k = site k
    };
    std::vector<Term> terms;
};

inline Matrix pauli_site(char p) {
    Matrix m = Matrix::Identity(3, 3);
    const Complex i(0.0, 1.0);
    switch (p) {
        case 'I': break;
        case 'X': m(0, 0) = 0; m(1, 1) = 0; m(0, 1) = 1; m(1, 0) = 1; break;
        case 'Y': m(0, 0) = 0; m(1, 1) = 0; m(0, 1) = -i; m(1, 0) = i; break;
        case 'Z': m(1, 1) = -1; break;
        default: throw std::invalid_argument("unknown Pauli symbol");
    }
    return m;
}

inline double expectation(const Register& reg, const Observable& obs) {
    const std::int64_t dim = reg.dim();
    Complex total = 0.0;
    for (const auto& term : obs.terms) {
        if (static_cast<int>(term.paulis.size()) != reg.n_sites)
            throw std::invalid_argument("observable term length mismatch");
        std::vector<Matrix> site_ops;
        site_ops.reserve(reg.n_sites);
        for (char p : term.paulis) site_ops.push_back(pauli_site(p));
        Complex tr = 0.0;
        for (std::int64_t i = 0; i < dim; ++i) {
            for (std::int64_t j = 0; j < dim; ++j) {
                // element <i| O |j> of the product operator
                Complex o = 1.0;
                std::int64_t qi = i, qj = j;
                for (int s = 0; s < reg.n_sites && o != Complex(0.0); ++s) {
                    o *= site_ops[s](qi % 3, qj % 3);
                    qi /= 3; qj /= 3;
                }
                if (o != Complex(0.0)) tr += o * reg.rho(j, i);
            }
        }
        total += term.coeff * tr;
    }
    if (std::abs(total.imag()) > 1e-10)
        throw std::runtime_error("expectation has non-negligible imaginary part");
    return total.real();
}

inline double fidelity_pure(const Register& reg, const Vector& target) {
    if (target.size() != reg.dim()) throw std::invalid_argument("target dimension mismatch");
    if (std::abs(target.norm() - 1.0) > 1e-10) throw std::invalid_argument("target state not normalized");
    const Complex f = target.adjoint() * reg.rho * target;
    return f.real();
}

// Draws one z-basis outcome on the given sites and collapses the register onto
// the sampled product projector.
inline std::string sample_zbasis(Register& reg, const std::vector<int>& sites, Rng& rng) {
    detail::SiteIndexer ix(reg.n_sites, sites);
    std::vector<double> probs(ix.sub_dim, 0.0);
    for (std::int64_t sub = 0; sub < ix.sub_dim; ++sub)
        for (std::int64_t r = 0; r < ix.rest_dim; ++r) {
            const std::int64_t f = ix.full(sub, r);
            probs[sub] += reg.rho(f, f).real();
        }
    std::discrete_distribution<std::int64_t> dist(probs.begin(), probs.end());
    const std::int64_t picked = dist(rng);

    // project: keep only rows/columns whose sub index equals the outcome
    Matrix proj = Matrix::Zero(reg.rho.rows(), reg.rho.cols());
    for (std::int64_t r = 0; r < ix.rest_dim; ++r)
        for (std::int64_t c = 0; c < ix.rest_dim; ++c)
            proj(ix.full(picked, r), ix.full(picked, c)) = reg.rho(ix.full(picked, r), ix.full(picked, c));
    const double p = probs[picked];
    reg.rho = proj / p;

    std::string out(sites.size(), '0');
    std::int64_t q = picked;
    for (std::size_t k = 0; k < sites.size(); ++k) {
        out[k] = "01L"[q % 3];
        q /= 3;
    }
    return out;
}

}  // namespace iondfs
