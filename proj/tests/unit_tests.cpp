#include "iondfs/experiments.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace iondfs;
using Catch::Approx;

namespace {

Matrix random_density(int dim, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = Complex(n(rng), n(rng));
    Matrix rho = g * g.adjoint();
    return rho / rho.trace().real();
}

// embed a 4-qubit density matrix into a 4-site three-level register
Register embed_qubits(const Matrix& rho16) {
    Register reg = init_register(4);
    reg.rho.setZero();
    auto expand = [](int q) {
        std::int64_t idx = 0, stride = 1;
        for (int s = 0; s < 4; ++s) {
            idx += ((q >> s) & 1) * stride;
            stride *= 3;
        }
        return idx;
    };
    for (int a = 0; a < 16; ++a)
        for (int b = 0; b < 16; ++b) reg.rho(expand(a), expand(b)) = rho16(a, b);
    return reg;
}

}  // namespace

TEST_CASE("register construction and basis indexing") {
    CHECK_THROWS_AS(init_register(0), std::invalid_argument);
    Register reg = init_register(3);
    CHECK(reg.dim() == 27);
    CHECK(reg.rho(0, 0).real() == Approx(1.0));
    CHECK(reg.trace_error() < 1e-12);

    // character k addresses site k; site 0 is the least significant trit
    CHECK(basis_index(std::string("100")) == 1);
    CHECK(basis_index(std::string("010")) == 3);
    CHECK(basis_index(std::string("00L")) == 18);
    CHECK_THROWS_AS(basis_index(std::string("2")), std::invalid_argument);
    CHECK_THROWS_AS(basis_ket(2, "012"), std::invalid_argument);
}

TEST_CASE("unitary and Kraus application") {
    Register reg = init_register(2);
    const Matrix x = pauli_site('X');
    apply_unitary_inplace(reg, x, {1});
    CHECK(reg.rho(basis_index(std::string("01")), basis_index(std::string("01"))).real() ==
          Approx(1.0));

    Matrix bad = Matrix::Identity(3, 3) * 2.0;
    CHECK_THROWS_AS(apply_unitary_inplace(reg, bad, {0}), std::invalid_argument);
    CHECK_THROWS_AS(apply_unitary_inplace(reg, x, {5}), std::invalid_argument);
    CHECK_THROWS_AS(apply_unitary_inplace(reg, x, {0, 0}), std::invalid_argument);

    // trace-preservation guard
    std::vector<Matrix> not_tp{0.5 * Matrix::Identity(3, 3)};
    CHECK_THROWS_AS(apply_kraus_inplace(reg, not_tp, {0}), std::invalid_argument);
    apply_kraus_inplace(reg, leakage_kraus(0.1, 1.0), {0});
    CHECK(reg.trace_error() < 1e-10);
}

TEST_CASE("Pauli operators act as identity on the leaked level") {
    Register reg = init_register(1);
    reg.rho.setZero();
    reg.rho(2, 2) = 1.0;  // |L>
    Observable o;
    o.terms.push_back({1.0, "X"});
    CHECK(expectation(reg, o) == Approx(1.0));
    o.terms[0].paulis = "Z";
    CHECK(expectation(reg, o) == Approx(1.0));
}

TEST_CASE("z-basis sampling collapses and reports site order") {
    Rng rng(7);
    Register reg = register_from_pure(basis_ket(3, "01L"));
    std::string out = sample_zbasis(reg, {0, 1, 2}, rng);
    CHECK(out == "01L");
    CHECK(reg.trace_error() < 1e-10);
}

TEST_CASE("global rotation matches the one-site matrix exponential") {
    const GateOp op = GlobalRot{RotAxis::Y, 0.7, 0.0, SiteType::S};
    const std::vector<SiteType> types{SiteType::S};
    const Matrix u = gate_unitary(op, 1, types);
    // exp(-i theta/2 Y) on the qubit block
    const double c = std::cos(0.35), s = std::sin(0.35);
    CHECK(std::abs(u(0, 0) - Complex(c)) < 1e-12);
    CHECK(std::abs(u(0, 1) - Complex(-s)) < 1e-12);
    CHECK(std::abs(u(1, 0) - Complex(s)) < 1e-12);
    CHECK(std::abs(u(2, 2) - Complex(1.0)) < 1e-12);
}

TEST_CASE("light-shift gate carries the global Y byproduct") {
    const std::vector<SiteType> types{SiteType::S, SiteType::S};
    const Matrix with_echo = gate_unitary(Rzz{0, 1, -kPi / 2, true}, 2, types);
    const Matrix bare = gate_unitary(Rzz{0, 1, -kPi / 2, false}, 2, types);
    Matrix yy = Matrix::Zero(9, 9);
    const Matrix y = pauli_site('Y');
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
                for (int d = 0; d < 3; ++d) yy(b * 3 + a, d * 3 + c) = y(a, c) * y(b, d);
    CHECK((with_echo - bare * yy).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(gate_unitary(Rzz{0, 0, kPi / 2, true}, 2, types), std::invalid_argument);
}

TEST_CASE("gates addressing shelved sites are rejected") {
    Register reg = init_register(2);
    Circuit c;
    c.n_sites = 2;
    c.ops.push_back(Shelve{0});
    c.ops.push_back(Rz{0, 1.0});
    CHECK_THROWS_AS(run_circuit_inplace(reg, c), ProtocolError);

    Register reg2 = init_register(2);
    Circuit c2;
    c2.n_sites = 2;
    c2.ops.push_back(Unshelve{0});
    CHECK_THROWS_AS(run_circuit_inplace(reg2, c2), ProtocolError);
}

TEST_CASE("shelving hides sites from global rotations") {
    Register reg = init_register(2);
    Circuit c;
    c.n_sites = 2;
    c.ops.push_back(Shelve{1});
    c.ops.push_back(GlobalRot{RotAxis::X, kPi, 0.0, SiteType::S});
    c.ops.push_back(Unshelve{1});
    run_circuit_inplace(reg, c);
    // site 0 flipped, site 1 untouched
    CHECK(reg.rho(basis_index(std::string("10")), basis_index(std::string("10"))).real() ==
          Approx(1.0).margin(1e-12));
}

TEST_CASE("all four target states are prepared exactly, coolants restored") {
    const Layout layout = Layout::six_ion();
    for (BellTarget t : {BellTarget::PsiPlus, BellTarget::PsiMinus, BellTarget::PhiPlus,
                         BellTarget::PhiMinus}) {
        Register reg = init_register(6, layout.roles());
        run_circuit_inplace(reg, build_prep_circuit(t, layout));
        CHECK(fidelity_pure(reg, logical_target(t, layout)) == Approx(1.0).margin(1e-9));
        for (int s : {0, 5}) {
            double p0 = 0.0;
            const std::int64_t stride = pow3(s);
            for (std::int64_t k = 0; k < reg.dim(); ++k)
                if ((k / stride) % 3 == 0) p0 += reg.rho(k, k).real();
            CHECK(p0 == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("circuit text serialization round-trips") {
    const Circuit c = build_prep_circuit(BellTarget::PhiMinus);
    const std::string text = to_text(c);
    const Circuit back = from_text(text);
    CHECK(to_text(back) == text);
    REQUIRE(back.n_sites == 6);
    REQUIRE(back.ops.size() == c.ops.size());

    CHECK_THROWS_AS(from_text("sites 2\nbogus 1 2\n"), std::invalid_argument);
    const Circuit small = from_text("sites 2\nrz 1 0.5\nrzz 0 1 1.5707963267948966 echo\nshelve 0\n");
    CHECK(small.ops.size() == 3);
}

TEST_CASE("depolarizing strength calibration from Bell fidelity") {
    CHECK(depolarizing_from_bell_fidelity(0.991) == Approx(0.01125));
    CHECK(depolarizing_from_bell_fidelity(1.0) == Approx(0.0));
    CHECK_THROWS_AS(depolarizing_from_bell_fidelity(1.2), std::invalid_argument);
}

TEST_CASE("field profile and detunings") {
    FieldProfile p;
    p.b0 = 1.0;
    p.grad = 2.0;
    p.curv = 3.0;
    p.positions = {-1.0, 0.0, 2.0};
    const auto d = detuning_vector(p);
    CHECK(d[0] == Approx(1.0 - 2.0 + 3.0));
    CHECK(d[1] == Approx(1.0));
    CHECK(d[2] == Approx(1.0 + 4.0 + 12.0));

    p.positions = {0.0, 0.0};
    CHECK_THROWS_AS(detuning_vector(p), ConfigurationError);
}

TEST_CASE("dephasing unitary phase and leakage channel against the generic path") {
    const Matrix u = dephasing_unitary({0.25}, 1.0);
    CHECK(std::abs(u(1, 1) - std::exp(Complex(0.0, -2.0 * kPi * 0.25))) < 1e-12);
    CHECK(std::abs(u(0, 0) - Complex(1.0)) < 1e-12);
    CHECK(std::abs(u(2, 2) - Complex(1.0)) < 1e-12);

    // fast elementwise storage path vs generic Kraus/unitary application
    Rng rng(3);
    Register a = embed_qubits(random_density(16, rng));
    a.roles = {SiteRole::Memory, SiteRole::Memory, SiteRole::Memory, SiteRole::Memory};
    Register b = a;

    FieldProfile prof;
    prof.b0 = 3.0;
    prof.grad = 1.7;
    prof.positions = {-1.5, -0.5, 0.5, 1.5};
    NoiseModel model;
    model.lambda_leak = 0.05;
    Rng r1(1);
    storage_evolution_inplace(a, 2.0, model, prof, false, 2, r1);

    const auto det = detuning_vector(prof);
    for (int half = 0; half < 2; ++half) {
        for (int s = 0; s < 4; ++s) {
            Matrix u1 = dephasing_unitary({det[s]}, 1.0);
            apply_unitary_inplace(b, u1, {s});
            apply_kraus_inplace(b, leakage_kraus(model.lambda_leak, 1.0), {s});
        }
    }
    CHECK((a.rho - b.rho).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("storage evolution guards and identities") {
    const Layout layout = Layout::six_ion();
    Register reg = register_from_pure(logical_target(BellTarget::PsiPlus, layout), layout.roles());
    NoiseModel model;
    FieldProfile prof;
    prof.positions = equilibrium_positions(6);
    Rng rng(1);

    Register copy = reg;
    storage_evolution_inplace(copy, 0.0, model, prof, true, 4, rng);
    CHECK((copy.rho - reg.rho).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(storage_evolution_inplace(copy, 1.0, model, prof, true, 3, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(storage_evolution_inplace(copy, 1.0, model, prof, false, 1, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(storage_evolution_inplace(copy, -1.0, model, prof, false, 2, rng),
                    std::invalid_argument);
}

TEST_CASE("spin echo refocuses arbitrary static detunings") {
    const Layout layout = Layout::six_ion();
    const Vector target = logical_target(BellTarget::PsiPlus, layout);
    Register reg = register_from_pure(target, layout.roles());
    NoiseModel model;
    FieldProfile prof;
    prof.positions = equilibrium_positions(6);
    prof.b0 = 11.3;
    prof.grad = 4.2;
    prof.curv = 1.9;
    Rng rng(1);
    storage_evolution_inplace(reg, 3.0, model, prof, true, 8, rng);
    CHECK(fidelity_pure(reg, target) == Approx(1.0).margin(1e-10));
}

TEST_CASE("Ornstein-Uhlenbeck detuning trajectories") {
    NoiseModel model;
    model.ou_common = {5.0, 2.0};
    model.ou_differential = {1.0, 1.0};
    FieldProfile prof;
    prof.positions = {-1.0, 1.0};
    Rng rng(42);
    const auto traj = ou_trajectory(model, prof, 2000, 0.1, rng);
    REQUIRE(traj.size() == 2000);
    double ms = 0.0;
    for (const auto& row : traj) ms += row[0] * row[0];
    ms /= traj.size();
    // stationary variance sigma_c^2 + sigma_d^2 within a loose statistical band
    CHECK(ms > 0.5 * 26.0);
    CHECK(ms < 2.0 * 26.0);

    NoiseModel quiet;
    Rng rng2(1);
    const auto zero = ou_trajectory(quiet, prof, 5, 0.1, rng2);
    for (const auto& row : zero)
        for (double v : row) CHECK(v == 0.0);

    // identical seeds give identical trajectories
    Rng ra(9), rb(9);
    CHECK(ou_trajectory(model, prof, 50, 0.1, ra) == ou_trajectory(model, prof, 50, 0.1, rb));
}

TEST_CASE("witness observables take their textbook values on the targets") {
    const Layout layout = Layout::six_ion();
    for (auto [target, family] :
         {std::pair{BellTarget::PsiPlus, StateFamily::Psi},
          std::pair{BellTarget::PhiPlus, StateFamily::Phi}}) {
        Register reg = register_from_pure(logical_target(target, layout), layout.roles());
        CHECK(expectation(reg, observable_o1(family, layout)) == Approx(1.0).margin(1e-10));
        CHECK(expectation(reg, observable_o2(layout)) == Approx(1.0).margin(1e-10));
        CHECK(expectation(reg, observable_o3(family, layout)) == Approx(-1.0).margin(1e-10));
        CHECK(ghz_fidelity_analytic(reg, family, layout) == Approx(1.0).margin(1e-10));
    }
    // maximally mixed memory: only the identity term of the population witness survives
    Register mixed = init_register(4);
    mixed.rho = Matrix::Zero(81, 81);
    for (int q = 0; q < 16; ++q) {
        std::int64_t idx = 0, stride = 1;
        for (int s = 0; s < 4; ++s) {
            idx += ((q >> s) & 1) * stride;
            stride *= 3;
        }
        mixed.rho(idx, idx) = 1.0 / 16.0;
    }
    CHECK(expectation(mixed, observable_o1(StateFamily::Psi, Layout::bare(4))) ==
          Approx(1.0 / 8.0).margin(1e-10));
}

TEST_CASE("Monte Carlo estimation is exact on the pure target and discards leaks") {
    const Layout layout = Layout::six_ion();
    Register reg = register_from_pure(logical_target(BellTarget::PsiPlus, layout), layout.roles());
    Rng rng(11);
    const FidelityEstimate f = ghz_fidelity_mc(reg, StateFamily::Psi, 64, rng, layout);
    CHECK(f.o1.mean == Approx(1.0));
    CHECK(f.o2.mean == Approx(1.0));
    CHECK(f.o3.mean == Approx(-1.0));
    CHECK(f.fidelity == Approx(1.0));
    CHECK(f.fidelity_stderr == Approx(0.0).margin(1e-12));

    // strong leakage on one memory site: roughly half the shots read 'L'
    Register leaky = reg;
    apply_kraus_inplace(leaky, leakage_kraus(std::log(2.0), 1.0), {1});
    Rng rng2(5);
    const TermEstimate t = estimate_mc(leaky, FidelityTerm::O1, StateFamily::Psi, 400, rng2, layout);
    CHECK(t.discarded_leak > 100);
    CHECK(t.shots + t.discarded_leak == 400);
}

TEST_CASE("Monte Carlo estimate converges on a mixed state") {
    Register mixed = init_register(6, Layout::six_ion().roles());
    // dephase the target into an even mixture of the two basis strings
    const Layout layout = Layout::six_ion();
    mixed.rho.setZero();
    mixed.rho(basis_index(std::string("010010")), basis_index(std::string("010010"))) = 0.5;
    mixed.rho(basis_index(std::string("001100")), basis_index(std::string("001100"))) = 0.5;
    Rng rng(23);
    const TermEstimate o1 = estimate_mc(mixed, FidelityTerm::O1, StateFamily::Psi, 500, rng, layout);
    CHECK(o1.mean == Approx(1.0));  // both strings lie in the target span
    const TermEstimate o2 = estimate_mc(mixed, FidelityTerm::O2, StateFamily::Psi, 500, rng, layout);
    CHECK(o2.mean == Approx(0.0).margin(5.0 * std::max(o2.std_error, 1e-3)));
}

TEST_CASE("parity expectation is phase-insensitive on the protected state") {
    const Layout layout = Layout::six_ion();
    Register reg = register_from_pure(logical_target(BellTarget::PsiPlus, layout), layout.roles());
    for (double phi : {0.0, 0.3, 1.1, 2.9})
        CHECK(parity_expectation(reg, phi, layout) == Approx(1.0).margin(1e-10));
}

TEST_CASE("four-stage decode table") {
    CHECK(decode_stages({true, false, false, false}) == ReadoutSymbol::EarlyLoss);
    CHECK(decode_stages({false, true, false, false}) == ReadoutSymbol::Zero);
    CHECK(decode_stages({false, false, true, false}) == ReadoutSymbol::Leak);
    CHECK(decode_stages({false, false, false, true}) == ReadoutSymbol::One);
    CHECK(decode_stages({false, false, false, false}) == ReadoutSymbol::Leak);
}

TEST_CASE("assignment model routes misreads as specified") {
    AssignmentModel sure{1.0, 1.0, 1.0};
    Rng rng(1);
    CHECK(simulate_readout(ReadoutSymbol::Zero, sure, rng).decoded == ReadoutSymbol::Zero);
    CHECK(simulate_readout(ReadoutSymbol::One, sure, rng).decoded == ReadoutSymbol::One);
    CHECK(simulate_readout(ReadoutSymbol::Leak, sure, rng).decoded == ReadoutSymbol::Leak);

    AssignmentModel broken{0.0, 0.0, 0.0};
    // a missed |0> reads as |1>; a missed |1> reads as Leak; a dark leak stays Leak
    CHECK(simulate_readout(ReadoutSymbol::Zero, broken, rng).decoded == ReadoutSymbol::One);
    CHECK(simulate_readout(ReadoutSymbol::One, broken, rng).decoded == ReadoutSymbol::Leak);
    CHECK(simulate_readout(ReadoutSymbol::Leak, broken, rng).decoded == ReadoutSymbol::Leak);
}

TEST_CASE("postselection and survival bookkeeping") {
    AssignmentModel sure{1.0, 1.0, 1.0};
    Rng rng(2);
    std::vector<ShotRecord> shots;
    shots.push_back(readout_shot("0110", sure, rng));
    shots.push_back(readout_shot("01L0", sure, rng));
    shots.push_back(readout_shot("X110", sure, rng));
    const PostselectionSummary s = postselect(shots);
    CHECK(s.total == 3);
    CHECK(s.kept == 1);
    CHECK(s.survival() == Approx(1.0 / 3.0));

    const double lam = -std::log(0.88) / 800.0;
    CHECK(survival_probability(lam, 960.0, 4) == Approx(0.5415).margin(5e-4));
    CHECK(leakage_rate_from_survival(0.88, 800.0) == Approx(lam));
    const auto curve = survival_curve(lam, {0.0, 800.0}, 1);
    CHECK(curve[0] == Approx(1.0));
    CHECK(curve[1] == Approx(0.88));
}

TEST_CASE("equilibrium positions and transverse modes match the chain oracle") {
    const auto x = equilibrium_positions(6);
    // values frozen from an independent Newton solve of the dimensionless
    // equilibrium equations
    const std::vector<double> expected{-2.01231, -1.13612, -0.36992, 0.36992, 1.13612, 2.01231};
    for (int i = 0; i < 6; ++i) CHECK(x[i] == Approx(expected[i]).margin(2e-4));
    CHECK(x[0] == Approx(-x[5]));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coulomb_matrix(x), Eigen::EigenvaluesOnly);
    const std::vector<double> lam{0.0, 1.0, 2.4, 4.2, 6.3, 8.6};
    for (int k = 0; k < 6; ++k) CHECK(es.eigenvalues()(k) == Approx(lam[k]).margin(0.05));

    const ChainModes m = transverse_modes(x, 1.458, 0.2228);
    CHECK(m.freqs_mhz.back() == Approx(1.458));
    CHECK(std::is_sorted(m.freqs_mhz.begin(), m.freqs_mhz.end()));
    // COM mode participation is uniform
    for (int i = 0; i < 6; ++i)
        CHECK(std::abs(m.eta(i, 5)) == Approx(1.0 / std::sqrt(6.0)).margin(1e-9));

    CHECK_THROWS_AS(transverse_modes(x, 1.458, 1.0), ConfigurationError);
}

TEST_CASE("axial frequency fits the measured spectrum") {
    const std::vector<double> measured{1.303, 1.347, 1.385, 1.416, 1.441, 1.458};
    const auto x = equilibrium_positions(6);
    const double f_ax = fit_axial_freq(measured, 1.458, x);
    CHECK(f_ax == Approx(0.2228).margin(5e-4));
    const ChainModes m = transverse_modes(x, 1.458, f_ax);
    for (int k = 0; k < 6; ++k)
        CHECK(std::abs(m.freqs_mhz[k] - measured[k]) < 3e-3);  // within 3 kHz

    const ChainModel cm = ChainModel::from_measured(6, measured);
    CHECK(cm.mode_freqs_mhz == measured);
    CHECK(cm.f_ax_mhz == Approx(f_ax).margin(1e-6));
}

TEST_CASE("phase solver input validation") {
    const ChainModel chain = ChainModel::from_measured(6, {1.303, 1.347, 1.385, 1.416, 1.441, 1.458});
    SolveOptions opt;
    opt.n_segments = 3;
    CHECK_THROWS_AS(solve_phases(chain, 2, 3, opt), std::invalid_argument);
    opt.n_segments = 66;
    CHECK_THROWS_AS(solve_phases(chain, 2, 3, opt), std::invalid_argument);
    opt.n_segments = 24;
    CHECK_THROWS_AS(solve_phases(chain, 2, 2, opt), std::invalid_argument);
    CHECK_THROWS_AS(solve_phases(chain, 2, 7, opt), std::invalid_argument);

    // two segments give a single free phase against twelve constraints
    opt.n_segments = 2;
    opt.max_starts = 3;
    CHECK_THROWS_AS(solve_phases(chain, 2, 3, opt), SolverError);
}

TEST_CASE("exponential MLE matches the two-point closed form") {
    // two exactly representable probabilities: p(0) = 0.9, p(100) = 0.647
    std::vector<BinomialPoint> data{{0.0, 900, 1000}, {100.0, 647, 1000}};
    const double a_exact = 2.0 * 0.9 - 1.0;
    const double tau_exact = 100.0 / -std::log((2.0 * 0.647 - 1.0) / a_exact);
    const ExpFitResult fit = mle_fit_exponential(data);
    CHECK(fit.amplitude == Approx(a_exact).epsilon(1e-8));
    CHECK(fit.tau == Approx(tau_exact).epsilon(1e-6));
    CHECK(fit.tau_lower <= fit.tau);
    CHECK(fit.tau_upper >= fit.tau);
}

TEST_CASE("exponential MLE recovers exact generating parameters") {
    const double a0 = 0.906, tau0 = 5000.0;
    std::vector<BinomialPoint> data;
    const int n = 1000000000;
    for (double t : {2.0, 30.0, 60.0, 120.0, 240.0, 960.0}) {
        const double p = 0.5 * (1.0 + a0 * std::exp(-t / tau0));
        data.push_back({t, static_cast<int>(std::llround(p * n)), n});
    }
    const ExpFitResult fit = mle_fit_exponential(data);
    CHECK(fit.amplitude == Approx(a0).epsilon(1e-5));
    CHECK(fit.tau == Approx(tau0).epsilon(1e-4));
}

TEST_CASE("exponential MLE boundary behavior on all-successes data") {
    std::vector<BinomialPoint> data;
    for (auto [t, n] : {std::pair{2.0, 250}, {30.0, 80}, {60.0, 70}, {120.0, 60}, {240.0, 50},
                        {960.0, 30}})
        data.push_back({t, n, n});
    const ExpFitResult fit = mle_fit_exponential(data);
    CHECK(fit.amplitude == Approx(1.0).margin(1e-6));
    CHECK(fit.tau_upper_unbounded);
    CHECK(std::isinf(fit.tau_upper));
    CHECK(fit.tau_lower > 1.0);
    CHECK(std::isfinite(fit.tau_lower));

    CHECK_THROWS_AS(mle_fit_exponential({{1.0, 1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(mle_fit_exponential({{1.0, 2, 1}, {2.0, 1, 1}}), std::invalid_argument);
}

TEST_CASE("sinusoid fit recovers period and flags undamped traces") {
    std::vector<SinusoidPoint> data;
    const double period = 0.2691;
    for (int i = 0; i < 40; ++i) {
        const double t = 0.35 * i / 39.0;
        data.push_back({t, std::cos(2.0 * kPi * t / period), 0.01});
    }
    const SinusoidFitResult fit = fit_sinusoid_decay(data, 0.25);
    CHECK(fit.converged);
    CHECK(fit.period == Approx(period).epsilon(1e-6));
    CHECK(fit.decay_unbounded);

    // damped trace
    std::vector<SinusoidPoint> damped;
    for (int i = 0; i < 60; ++i) {
        const double t = 1.2 * i / 59.0;
        damped.push_back({t, std::exp(-t / 0.8) * std::cos(2.0 * kPi * t / 0.3), 0.01});
    }
    const SinusoidFitResult fit2 = fit_sinusoid_decay(damped, 0.28);
    CHECK(fit2.period == Approx(0.3).epsilon(1e-4));
    CHECK(fit2.decay_time == Approx(0.8).epsilon(1e-3));
}

TEST_CASE("config defaults, schedule, and validation") {
    const ExperimentConfig cfg = parse_config(nlohmann::json::parse(R"({"run":{"seed":7}})"));
    CHECK(cfg.run.seed == 7);
    CHECK(cfg.run.times_s == std::vector<double>{2, 30, 60, 120, 240, 960});
    CHECK(cfg.run.shots == std::vector<int>{250, 80, 70, 60, 50, 30});
    CHECK(cfg.chain.n_ions == 6);
    CHECK(cfg.gate.bell_fidelity == Approx(0.991));

    auto expect_error = [](const char* text, const char* needle) {
        try {
            parse_config(nlohmann::json::parse(text));
            FAIL("expected ConfigurationError");
        } catch (const ConfigurationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error(R"({"noise":{"leak_rate":-1.0}})", "noise.leak_rate");
    expect_error(R"({"noise":{"bogus":1}})", "noise.bogus");
    expect_error(R"({"frobnicate":{}})", "frobnicate");
    expect_error(R"({"run":{"times_s":[1,1],"shots":[5,5]}})", "ascending");
    expect_error(R"({"run":{"windows":[[1.0]]}})", "windows");
    expect_error(R"({"run":{"encoding":"banana"}})", "encoding");
}

TEST_CASE("storage scan is flat and exact without noise") {
    ExperimentConfig cfg = parse_config(nlohmann::json::object());
    cfg.run.times_s = {1.0, 100.0};
    cfg.run.shots = {40, 40};
    const StorageScan scan = run_storage_scan(cfg);
    for (const auto& p : scan.points) {
        CHECK(p.estimate.fidelity == Approx(1.0).margin(1e-9));
        CHECK(p.discarded == 0);
        CHECK(p.survival == Approx(1.0));
    }
    // determinism of the whole pipeline under a fixed seed
    CHECK(storage_csv(run_storage_scan(cfg)) == storage_csv(scan));
}

TEST_CASE("leakage-only storage keeps fidelity on surviving shots") {
    ExperimentConfig cfg = parse_config(nlohmann::json::object());
    cfg.noise.leak_rate = leakage_rate_from_survival(0.88, 800.0);
    cfg.run.times_s = {960.0};
    cfg.run.shots = {120};
    const StorageScan scan = run_storage_scan(cfg);
    const auto& p = scan.points[0];
    CHECK(p.estimate.fidelity == Approx(1.0).margin(1e-9));
    CHECK(p.survival == Approx(0.5415).margin(0.2));
    CHECK(p.n_kept + p.discarded == 3 * 120);
}

TEST_CASE("parity scan: gradient immunity and curvature period") {
    // order 2, pure linear gradient on the symmetric chain: flat parity
    ExperimentConfig cfg = parse_config(nlohmann::json::object());
    cfg.run.encoding = Encoding::Sensitive;
    cfg.noise.grad_hz = 25.0;
    cfg.run.windows = {{0.0, 12.0}};
    cfg.run.grid_points = 13;
    const ParityScan flat = run_parity_scan(cfg);
    for (const auto& p : flat.points) CHECK(p.parity == Approx(1.0).margin(1e-9));

    // order 1 with a 3.716 Hz inter-ion splitting oscillates at 269.1 ms
    ExperimentConfig cfg1 = parse_config(nlohmann::json::object());
    cfg1.run.encoding = Encoding::Sensitive;
    cfg1.run.dfs_order = 1;
    cfg1.noise.grad_hz = 3.716;
    cfg1.run.windows = {{0.0, 0.35}};
    cfg1.run.grid_points = 36;
    const ParityScan osc = run_parity_scan(cfg1);
    std::vector<SinusoidPoint> pts;
    for (const auto& p : osc.points) pts.push_back({p.t, p.parity, 0.01});
    const SinusoidFitResult fit = fit_sinusoid_decay(pts, 0.25);
    CHECK(fit.period == Approx(1.0 / 3.716).epsilon(1e-4));

    CHECK_THROWS_AS(run_parity_scan(parse_config(nlohmann::json::object())), ConfigurationError);
}

TEST_CASE("prep pipeline reports unit fidelity and clean coolants when noiseless") {
    ExperimentConfig cfg = parse_config(nlohmann::json::object());
    cfg.gate.bell_fidelity = 1.0;
    cfg.run.prep_shots = 50;
    const PrepReport rep = run_prep_fidelity(cfg);
    CHECK(rep.estimate.fidelity == Approx(1.0).margin(1e-9));
    for (double p : rep.coolant_pop0) CHECK(p == Approx(1.0).margin(1e-9));
}

TEST_CASE("detection calibration accuracies track the model") {
    ExperimentConfig cfg = parse_config(nlohmann::json::object());
    cfg.detection.trials = 20000;
    const DetectionCalib calib = run_detection_calib(cfg);
    CHECK(calib.accuracy[0] == Approx(0.996).margin(0.003));
    CHECK(calib.accuracy[1] == Approx(0.981).margin(0.005));
    CHECK(calib.accuracy[2] == Approx(1.0).margin(1e-12));
}
