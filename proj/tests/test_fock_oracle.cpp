#include <doctest.h>

#include <cmath>

#include "spinmeas/fock_oracle.hpp"

using namespace spinmeas;

TEST_CASE("coherent embedding has poisson weights") {
    const cplx g(1.2, -0.5);
    const CoherentEmbedding e = coherent_in_fock(g, 40);
    CHECK(e.truncation_error < 1e-14);
    const double nbar = std::norm(g);
    double p = std::exp(-nbar);
    for (int n = 0; n <= 10; ++n) {
        CHECK(std::norm(e.amps(n)) == doctest::Approx(p).epsilon(1e-12));
        p *= nbar / (n + 1);
    }
    CHECK(coherent_in_fock(cplx(5.0, 0.0), 10).truncation_error > 0.5);
}

TEST_CASE("hamiltonian is symmetric and commutes with parity") {
    FockSpec spec;
    spec.modes = 2;
    spec.n_max = 8;
    BathSpec bath;
    bath.omegas = Eigen::Vector2d(0.6, 1.1);
    bath.gs = Eigen::Vector2d(0.5, 0.3);
    const FockHamiltonian h = build_hamiltonian(spec, bath, HamiltonianVariant::sigma_x_selfenergy, 2.0, 1.0, 1.0);
    CHECK(h.rows() == static_cast<Eigen::Index>(spec.dimension()));
    CHECK(Eigen::MatrixXd(h - FockHamiltonian(h.transpose())).norm() == 0.0);
    const FockHamiltonian par = parity_operator(spec);
    CHECK(Eigen::MatrixXd(h * par - par * h).norm() < 1e-12);
}

TEST_CASE("uncoupled spectrum is spin splitting plus oscillator ladder") {
    FockSpec spec;
    spec.n_max = 5;
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, 0.7);
    bath.gs = Eigen::VectorXd::Constant(1, 0.4);
    const FockHamiltonian h = build_hamiltonian(spec, bath, HamiltonianVariant::sigma_z_selfenergy, 3.0, 1.0, 0.0);
    const Eigen::MatrixXd d(h);
    CHECK((d - Eigen::MatrixXd(d.diagonal().asDiagonal())).norm() == 0.0);
    CHECK(d(0, 0) == doctest::Approx(1.5));
    CHECK(d(1, 1) == doctest::Approx(1.5 + 0.7));
    CHECK(d(6, 6) == doctest::Approx(-1.5));
}

TEST_CASE("rabi precession of a free spin") {
    FockSpec spec;
    spec.n_max = 3;
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, 1.0);
    bath.gs = Eigen::VectorXd::Constant(1, 0.5);
    const double omega0 = 1.3;
    const FockHamiltonian h = build_hamiltonian(spec, bath, HamiltonianVariant::sigma_x_selfenergy, omega0, 1.0, 0.0);
    Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(4);
    vac(0) = 1.0;
    const std::vector<double> times{0.0, 0.4, 1.1, 2.5};
    const auto states = propagate_exact(product_state(spec, spinor(SpinPreparation::plus_z), {vac}), h, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const BlochVector a = bloch_vector(fock_spin_density(spec, states[i]));
        CHECK(a.z == doctest::Approx(std::cos(omega0 * times[i])).epsilon(1e-10));
    }
}

TEST_CASE("krylov stepping agrees with dense diagonalization") {
    FockSpec spec;
    spec.n_max = 30;
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, 1.0);
    bath.gs = Eigen::VectorXd::Constant(1, 1.0);
    const FockHamiltonian h = build_hamiltonian(spec, bath, HamiltonianVariant::sigma_x_selfenergy, 2.0, 1.0, 1.0);
    const FockState psi0 = product_state(spec, spinor(SpinPreparation::plus_x), {coherent_in_fock(0.8, 30).amps});
    const std::vector<double> times{0.0, 0.5, 2.0, 6.0};
    const auto dense = propagate_exact(psi0, h, times, 4000);
    const auto krylov = propagate_exact(psi0, h, times, 0);
    for (std::size_t i = 0; i < times.size(); ++i) CHECK((dense[i] - krylov[i]).norm() < 1e-9);
}

TEST_CASE("the four single-mode starts") {
    const Fig1Params p;
    for (const Fig1Case c : kFig1Cases) {
        const auto trace = fig1_experiment(c, p);
        REQUIRE(trace.size() == 401);
        double az = 0.0;
        for (const auto& s : trace) {
            az = std::max(az, std::abs(s.a.z));
            CHECK(std::abs(s.norm - 1.0) < 1e-12);
        }
        if (c == Fig1Case::mixed) {
            CHECK(az > 0.05);
        } else {
            CHECK(az < 1e-6);
        }
    }
}

TEST_CASE("oscillator starts are normalized with the stated parity") {
    const Fig1Params p;
    const auto even = fig1_bath_state(Fig1Case::even_superposition, p);
    const auto odd = fig1_bath_state(Fig1Case::odd_superposition, p);
    CHECK(even.squaredNorm() == doctest::Approx(1.0));
    for (Eigen::Index n = 1; n < even.size(); n += 2) CHECK(even(n) == cplx(0.0));
    for (Eigen::Index n = 0; n < odd.size(); n += 2) CHECK(odd(n) == cplx(0.0));
    CHECK(parse_fig1_case("mixed") == Fig1Case::mixed);
    CHECK_THROWS_AS(parse_fig1_case("odd"), ConfigError);
}

TEST_CASE("dimension guard") {
    FockSpec spec;
    spec.modes = 2;
    spec.n_max = 1000;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.modes = 3;
    spec.n_max = 2;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
