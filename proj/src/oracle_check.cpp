#include "spinmeas/oracle_check.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/coherent_algebra.hpp"
#include "spinmeas/d2_state.hpp"
#include "spinmeas/fock_oracle.hpp"
#include "spinmeas/propagator.hpp"

namespace spinmeas {
namespace {

using lcplx = std::complex<long double>;

constexpr int kAlgebraFockLevels = 60;

// Single-mode coherent amplitudes in extended precision.
std::vector<lcplx> fock_amplitudes(cplx gamma) {
    const lcplx g(gamma.real(), gamma.imag());
    std::vector<lcplx> v(kAlgebraFockLevels + 1);
    lcplx a = std::exp(-0.5L * std::norm(g));
    for (int n = 0; n <= kAlgebraFockLevels; ++n) {
        v[static_cast<std::size_t>(n)] = a;
        a *= g / std::sqrt(static_cast<long double>(n + 1));
    }
    return v;
}

struct ModeSums {
    lcplx overlap;  // <a|b>
    lcplx number;   // <a|n|b>
    lcplx field;    // <a|a + a^dag|b>
};

ModeSums mode_sums(cplx a, cplx b) {
    const auto va = fock_amplitudes(a);
    const auto vb = fock_amplitudes(b);
    ModeSums s{};
    for (int n = 0; n <= kAlgebraFockLevels; ++n) {
        const auto k = static_cast<std::size_t>(n);
        const lcplx ca = std::conj(va[k]);
        s.overlap += ca * vb[k];
        s.number += static_cast<long double>(n) * ca * vb[k];
        if (n < kAlgebraFockLevels) s.field += ca * std::sqrt(static_cast<long double>(n + 1)) * vb[k + 1];
        if (n > 0) s.field += ca * std::sqrt(static_cast<long double>(n)) * vb[k - 1];
    }
    return s;
}

double rel_dev(cplx got, lcplx want) {
    const cplx w(static_cast<double>(want.real()), static_cast<double>(want.imag()));
    const double scale = std::max(std::abs(w), 1e-300);
    return std::abs(got - w) / scale;
}

std::string fmt(const char* f, double x) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

}  // namespace

bool OracleReport::passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

SuiteResult check_coherent_algebra(const OracleCheckOptions& options) {
    SuiteResult r;
    r.name = "coherent_algebra";
    r.tolerance = 1e-8;
    Rng rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> modes(1, 3);
    auto draw = [&] {
        const double rad = options.max_amplitude * std::sqrt(unit(rng));
        const double ang = 2.0 * std::numbers::pi * unit(rng);
        return std::polar(rad, ang);
    };
    double worst_overlap = 0.0;
    double worst_energy = 0.0;
    double worst_coupling = 0.0;
    for (int c = 0; c < options.algebra_cases; ++c) {
        const int n = modes(rng);
        Eigen::VectorXcd a(n), b(n);
        Eigen::VectorXd w(n), g(n);
        for (int k = 0; k < n; ++k) {
            a(k) = draw();
            b(k) = draw();
            w(k) = 0.1 + 2.0 * unit(rng);
            g(k) = 0.05 + unit(rng);
        }
        const auto el = matrix_elements(a, b, w, (options.coupling_sign * g).eval());

        std::vector<ModeSums> sums;
        for (int k = 0; k < n; ++k) sums.push_back(mode_sums(a(k), b(k)));
        lcplx s = 1.0L;
        for (const auto& m : sums) s *= m.overlap;
        lcplx energy = 0.0L;
        lcplx coupling = 0.0L;
        for (int k = 0; k < n; ++k) {
            lcplx others = 1.0L;
            for (int j = 0; j < n; ++j) {
                if (j != k) others *= sums[static_cast<std::size_t>(j)].overlap;
            }
            const auto& m = sums[static_cast<std::size_t>(k)];
            energy += static_cast<long double>(w(k)) * m.number * others;
            coupling += static_cast<long double>(g(k)) * m.field * others;
        }
        worst_overlap = std::max(worst_overlap, rel_dev(el.overlap, s));
        worst_energy = std::max(worst_energy, rel_dev(el.bath_energy, energy));
        worst_coupling = std::max(worst_coupling, rel_dev(el.coupling, coupling));
        ++r.cases;
    }
    r.max_deviation = std::max({worst_overlap, worst_energy, worst_coupling});
    r.passed = r.max_deviation < r.tolerance;
    r.detail = "overlap " + fmt("%.2e", worst_overlap) + ", energy " + fmt("%.2e", worst_energy) + ", coupling " +
               fmt("%.2e", worst_coupling);
    return r;
}

SuiteResult check_propagator(const OracleCheckOptions&) {
    SuiteResult r;
    r.name = "propagator_vs_exact";
    r.tolerance = 0.02;
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, 1.0);
    bath.gs = Eigen::VectorXd::Constant(1, 0.3);
    Protocol protocol;
    protocol.omega0 = 4.0;
    protocol.t_end = 20.0;

    IntegratorConfig cfg;
    const D2State init = make_product_initial(SpinPreparation::plus_z, Eigen::VectorXcd::Zero(1), 6);
    const std::vector<double> times = sample_grid(0.0, protocol.t_end, 0.1);
    const BlochTrace trace = run_trajectory(init, bath, protocol, cfg, times);

    FockSpec spec;
    spec.n_max = 40;
    const FockHamiltonian h = build_hamiltonian(spec, bath, protocol.variant, protocol.omega0, 1.0, 1.0);
    Eigen::VectorXcd vacuum = Eigen::VectorXcd::Zero(spec.n_max + 1);
    vacuum(0) = 1.0;
    const FockState psi0 = product_state(spec, spinor(SpinPreparation::plus_z), {vacuum});
    const auto exact = propagate_exact(psi0, h, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double az = fock_sample(spec, h, exact[i], times[i]).a.z;
        r.max_deviation = std::max(r.max_deviation, std::abs(trace.samples[i].a.z - az));
        ++r.cases;
    }
    r.passed = r.max_deviation < r.tolerance;
    r.detail = "N=1 M=6 g=0.3 omega0=4 omega1=1, spin +z, t<=20";
    return r;
}

SuiteResult check_entropy_identities(const OracleCheckOptions& options) {
    SuiteResult r;
    r.name = "entropy_identities";
    r.tolerance = 1e-8;
    BathSpec bath = discretize(SpectralDensityParams{}, 4, 2.0);
    Protocol protocol;
    protocol.t_end = 10.0;
    Rng rng(options.seed);
    const MultimodeConfig bath0 = sample_initial_bath(bath, ThermalParams{}, rng);
    const D2State init = make_product_initial(SpinPreparation::plus_x, bath0, 3);
    const BlochTrace trace = run_trajectory(init, bath, protocol, IntegratorConfig{}, sample_grid(0.0, 10.0, 0.25));
    for (const auto& s : trace.samples) {
        const double mutual = s.s_spin + s.s_env;
        r.max_deviation = std::max({r.max_deviation, std::abs(s.s_spin - s.s_env), std::abs(mutual - 2.0 * s.s_spin)});
        ++r.cases;
    }
    r.passed = r.max_deviation < r.tolerance;
    r.detail = "N=4 M=3 thermal start, t<=10";
    return r;
}

SuiteResult check_parity(const OracleCheckOptions&) {
    SuiteResult r;
    r.name = "parity_superselection";
    r.tolerance = 1e-6;
    Fig1Params p;
    p.coupling = 1.0;
    p.n_max = 60;
    p.t_end = 10.0;
    p.dt = 0.1;
    double mixed = 0.0;
    for (const Fig1Case c : kFig1Cases) {
        double worst = 0.0;
        for (const auto& s : fig1_experiment(c, p)) worst = std::max(worst, std::abs(s.a.z));
        ++r.cases;
        if (c == Fig1Case::mixed) {
            mixed = worst;
        } else {
            r.max_deviation = std::max(r.max_deviation, worst);
        }
    }
    r.passed = r.max_deviation < r.tolerance && mixed > 0.05;
    r.detail = "parity-definite max|a_z| " + fmt("%.2e", r.max_deviation) + ", mixed max|a_z| " + fmt("%.3f", mixed);
    return r;
}

OracleReport oracle_check(const OracleCheckOptions& options) {
    OracleReport rep;
    rep.suites.push_back(check_coherent_algebra(options));
    rep.suites.push_back(check_propagator(options));
    rep.suites.push_back(check_entropy_identities(options));
    rep.suites.push_back(check_parity(options));
    return rep;
}

std::string format_report(const OracleReport& report) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s %-6s %12s %12s %8s  %s\n", "suite", "result", "max_dev", "tolerance",
                  "cases", "detail");
    out += buf;
    for (const auto& s : report.suites) {
        std::snprintf(buf, sizeof buf, "%-24s %-6s %12.3e %12.3e %8ld  %s\n", s.name.c_str(),
                      s.passed ? "PASS" : "FAIL", s.max_deviation, s.tolerance, s.cases, s.detail.c_str());
        out += buf;
    }
    return out;
}

}  // namespace spinmeas
