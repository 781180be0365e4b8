#include <doctest.h>

#include <cmath>

#include "spinmeas/fock_oracle.hpp"
#include "spinmeas/propagator.hpp"

using namespace spinmeas;

namespace {

D2State thermal_start(const BathSpec& bath, SpinPreparation spin, Eigen::Index m, std::uint64_t seed) {
    Rng rng(seed);
    return make_product_initial(spin, sample_initial_bath(bath, {}, rng), m);
}

double max_norm_error(const BlochTrace& t) {
    double e = 0.0;
    for (const auto& s : t.samples) e = std::max(e, std::abs(s.norm - 1.0));
    return e;
}

}  // namespace

TEST_CASE("hamiltonian terms follow the modulations and the variant") {
    const BathSpec bath = discretize({}, 3, 1.5);
    Protocol p;
    p.omega0 = -2.0;
    p.f_O = Modulation::constant(0.5);
    p.f_OE = Modulation::constant(0.25);
    HamiltonianTerms h = hamiltonian_terms(bath, p, 0.0);
    CHECK(h.eps_x == doctest::Approx(-0.5));
    CHECK(h.eps_z == 0.0);
    CHECK((h.couplings - 0.25 * bath.gs).norm() < 1e-15);
    p.variant = HamiltonianVariant::sigma_z_selfenergy;
    h = hamiltonian_terms(bath, p, 0.0);
    CHECK(h.eps_x == 0.0);
    CHECK(h.eps_z == doctest::Approx(-0.5));
}

TEST_CASE("energy expectation matches the number-basis hamiltonian") {
    BathSpec bath;
    bath.omegas = Eigen::Vector2d(0.7, 1.3);
    bath.gs = Eigen::Vector2d(0.4, 0.2);
    Protocol p;
    p.omega0 = 1.5;
    std::srand(8);
    D2State s;
    s.amps = Eigen::MatrixX2cd::Random(3, 2);
    s.gammas = 0.5 * Eigen::MatrixXcd::Random(3, 2);
    normalize(s);
    FockSpec spec;
    spec.modes = 2;
    spec.n_max = 30;
    const FockHamiltonian h = build_hamiltonian(spec, bath, p.variant, p.omega0, 1.0, 1.0);
    const FockState psi = d2_to_fock(spec, s);
    CHECK(energy_expectation(s, bath, p, 0.0) == doctest::Approx(fock_expectation(h, psi)).epsilon(1e-9));
    const HamiltonianTerms terms = hamiltonian_terms(bath, p, 0.0);
    const FockState hpsi = h.cast<cplx>() * psi;
    CHECK(energy_square_expectation(s, bath, terms) == doctest::Approx(hpsi.squaredNorm()).epsilon(1e-9));
}

TEST_CASE("tdvp derivative is exact when the ansatz holds the exact solution") {
    // Uncoupled bath: each configuration rotates freely, the spin precesses.
    BathSpec bath;
    bath.omegas = Eigen::Vector2d(0.5, 1.0);
    bath.gs = Eigen::Vector2d(0.3, 0.1);
    Protocol p;
    p.f_OE = Modulation::constant(0.0);
    const D2State s = make_product_initial(SpinPreparation::plus_x, Eigen::Vector2cd(cplx(0.3, 0.1), cplx(-0.2, 0.4)), 1);
    const TdvpDerivative d = tdvp_derivative(s, bath, hamiltonian_terms(bath, p, 0.0), 1e-12, true);
    CHECK(d.residual < 1e-10);
    for (Eigen::Index n = 0; n < 2; ++n) {
        CHECK(std::abs(d.gammas_dot(0, n) + cplx(0.0, 1.0) * bath.omegas(n) * s.gammas(0, n)) < 1e-12);
    }
}

TEST_CASE("both metric solvers give the same derivative on a well-conditioned state") {
    const BathSpec bath = discretize({}, 4, 2.0);
    const D2State s = thermal_start(bath, SpinPreparation::plus_x, 3, 1);
    D2State t = s;
    t.amps.setConstant(cplx(0.3, 0.1));
    normalize(t);
    const HamiltonianTerms h = hamiltonian_terms(bath, Protocol{}, 0.0);
    const auto a = tdvp_derivative(t, bath, h, 1e-12, false, MetricSolver::spectral);
    const auto b = tdvp_derivative(t, bath, h, 1e-12, false, MetricSolver::shifted_cholesky);
    CHECK((a.amps_dot - b.amps_dot).norm() < 1e-6 * a.amps_dot.norm());
}

TEST_CASE("constant modulations conserve norm and energy") {
    const BathSpec bath = discretize({}, 16, 8.0);
    const D2State s = thermal_start(bath, SpinPreparation::plus_x, 4, 3);
    Protocol p;
    p.t_end = 25.0;
    const BlochTrace tr = run_trajectory(s, bath, p, IntegratorConfig{}, sample_grid(0.0, 25.0, 0.5));
    const double e0 = tr.samples.front().energy;
    double drift = 0.0;
    for (const auto& x : tr.samples) drift = std::max(drift, std::abs(x.energy - e0) / std::abs(e0));
    CHECK(drift < 1e-4);
    CHECK(max_norm_error(tr) < 1e-6);
}

TEST_CASE("sigma_z self-energy conserves a_z") {
    const BathSpec bath = discretize({}, 8, 2.0);
    Protocol p;
    p.variant = HamiltonianVariant::sigma_z_selfenergy;
    p.f_OE = Modulation::box(2.0, 8.0, 1.0);
    p.t_end = 15.0;
    for (const auto spin : {SpinPreparation::plus_z, SpinPreparation::minus_z}) {
        const BlochTrace tr = run_trajectory(thermal_start(bath, spin, 3, 2), bath, p, {}, sample_grid(0.0, 15.0, 0.5));
        for (const auto& x : tr.samples) CHECK(std::abs(x.a.z - tr.samples.front().a.z) < 1e-8);
    }
}

TEST_CASE("vacuum start with an x-polarized spin keeps a_z zero") {
    const BathSpec bath = discretize({}, 8, 4.0);
    Protocol p;
    p.t_end = 20.0;
    const D2State s = make_product_initial(SpinPreparation::plus_x, Eigen::VectorXcd::Zero(8), 5);
    const BlochTrace tr = run_trajectory(s, bath, p, {}, sample_grid(0.0, 20.0, 0.5));
    double worst = 0.0;
    for (const auto& x : tr.samples) worst = std::max(worst, std::abs(x.a.z));
    CHECK(worst < 1e-6);
}

TEST_CASE("single-mode variational dynamics follow the exact solution") {
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, 1.0);
    bath.gs = Eigen::VectorXd::Constant(1, 0.3);
    Protocol p;
    p.omega0 = 4.0;
    p.t_end = 20.0;
    const auto times = sample_grid(0.0, 20.0, 0.2);
    const BlochTrace tr = run_trajectory(make_product_initial(SpinPreparation::plus_z, Eigen::VectorXcd::Zero(1), 6),
                                         bath, p, {}, times);
    FockSpec spec;
    spec.n_max = 40;
    const FockHamiltonian h = build_hamiltonian(spec, bath, p.variant, p.omega0, 1.0, 1.0);
    Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(41);
    vac(0) = 1.0;
    const auto exact = propagate_exact(product_state(spec, spinor(SpinPreparation::plus_z), {vac}), h, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(std::abs(tr.samples[i].a.z - fock_sample(spec, h, exact[i], times[i]).a.z) < 0.02);
    }
}

TEST_CASE("entropy identity holds along a trajectory") {
    const BathSpec bath = discretize({}, 6, 2.0);
    Protocol p;
    p.t_end = 10.0;
    const BlochTrace tr = run_trajectory(thermal_start(bath, SpinPreparation::plus_x, 3, 9), bath, p, {},
                                         sample_grid(0.0, 10.0, 0.5));
    for (const auto& x : tr.samples) CHECK(std::abs(x.s_spin - x.s_env) < 1e-8);
}

TEST_CASE("sampled observables land on the requested grid") {
    const BathSpec bath = discretize({}, 4, 2.0);
    Protocol p;
    p.t_end = 3.0;
    const auto times = sample_grid(0.0, 3.0, 0.7);
    CHECK(times.back() == 3.0);
    const BlochTrace tr = run_trajectory(thermal_start(bath, SpinPreparation::plus_x, 2, 1), bath, p, {}, times);
    REQUIRE(tr.samples.size() == times.size());
    for (std::size_t i = 0; i < times.size(); ++i) CHECK(tr.samples[i].t == times[i]);
    CHECK(tr.final_state.time == doctest::Approx(3.0));
    CHECK(tr.stats.accepted > 0);
}

TEST_CASE("removing an empty configuration leaves the state unchanged") {
    const BathSpec bath = discretize({}, 3, 1.0);
    const D2State s = thermal_start(bath, SpinPreparation::plus_x, 3, 4);
    const D2State r = remove_configuration(s, 2);
    CHECK(r.multiplicity() == 2);
    CHECK(bloch_vector(reduced_spin_density(r)).x == doctest::Approx(1.0));
    CHECK(norm_squared(r) == doctest::Approx(1.0));
}

TEST_CASE("adaptive basis grows up to the cap and records events") {
    const BathSpec bath = discretize({}, 4, 2.0);
    Protocol p;
    p.t_end = 5.0;
    IntegratorConfig cfg;
    cfg.adaptive = true;
    cfg.spawn_threshold = 1e-3;
    cfg.max_multiplicity = 4;
    const BlochTrace tr = run_trajectory(thermal_start(bath, SpinPreparation::plus_x, 1, 6), bath, p, cfg,
                                         sample_grid(0.0, 5.0, 0.5));
    CHECK(tr.final_state.multiplicity() <= 4);
    CHECK(tr.final_state.multiplicity() > 1);
    bool spawned = false;
    for (const auto& e : tr.events) spawned = spawned || e.kind == "spawn";
    CHECK(spawned);
    CHECK(max_norm_error(tr) < 1e-5);
}

TEST_CASE("integrator configuration is validated") {
    IntegratorConfig c;
    c.rel_tol = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_metric_solver("qr"), ConfigError);
    CHECK(parse_metric_solver("shifted_cholesky") == MetricSolver::shifted_cholesky);
}
