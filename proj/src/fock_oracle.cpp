#include "spinmeas/fock_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace spinmeas {
namespace {

using Eigen::Index;
using Triplets = std::vector<Eigen::Triplet<double>>;

// Occupation of `mode` in bath index `b`.
int occupation(std::size_t b, int mode, int n_max) {
    const auto base = static_cast<std::size_t>(n_max + 1);
    for (int k = 0; k < mode; ++k) {
        b /= base;
    }
    return static_cast<int>(b % base);
}

std::size_t stride(int mode, int n_max) {
    std::size_t s = 1;
    for (int k = 0; k < mode; ++k) {
        s *= static_cast<std::size_t>(n_max + 1);
    }
    return s;
}

// Lanczos propagation of psi by time tau with local error estimate control.
void lanczos_advance(const FockHamiltonian& h, Eigen::VectorXcd& psi, double tau, int krylov_dim, double tol) {
    double done = 0.0;
    double step = tau;
    const Index n = psi.size();
    while (done < tau) {
        step = std::min(step, tau - done);
        const double beta0 = psi.norm();
        const int m = static_cast<int>(std::min<Index>(krylov_dim, n));
        Eigen::MatrixXcd v(n, m + 1);
        Eigen::VectorXd alpha(m);
        Eigen::VectorXd beta(m);
        v.col(0) = psi / beta0;
        int used = m;
        for (int j = 0; j < m; ++j) {
            Eigen::VectorXcd w = h * v.col(j);
            alpha(j) = std::real(v.col(j).dot(w));
            w -= alpha(j) * v.col(j);
            if (j > 0) w -= beta(j - 1) * v.col(j - 1);
            // Full reorthogonalization keeps the short recurrence honest.
            for (int k = 0; k <= j; ++k) {
                w -= v.col(k).dot(w) * v.col(k);
            }
            beta(j) = w.norm();
            if (beta(j) < 1e-14 * beta0) {
                used = j + 1;
                beta(j) = 0.0;
                break;
            }
            v.col(j + 1) = w / beta(j);
        }
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(used, used);
        for (int j = 0; j < used; ++j) {
            t(j, j) = alpha(j);
            if (j + 1 < used) {
                t(j, j + 1) = beta(j);
                t(j + 1, j) = beta(j);
            }
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        while (true) {
            const Eigen::VectorXcd phase =
                (es.eigenvalues().array() * (-step)).unaryExpr([](double x) { return std::polar(1.0, x); });
            const Eigen::VectorXcd c =
                es.eigenvectors().cast<cplx>() * (phase.asDiagonal() * es.eigenvectors().row(0).transpose().cast<cplx>());
            const double err = (used < m || beta(used - 1) == 0.0) ? 0.0 : beta(used - 1) * std::abs(c(used - 1));
            if (err <= tol || step < 1e-12 * tau) {
                psi = beta0 * (v.leftCols(used) * c);
                done += step;
                if (err < 0.1 * tol) step *= 1.5;
                break;
            }
            step *= 0.5;
        }
    }
}

}  // namespace

std::size_t FockSpec::bath_dimension() const {
    std::size_t d = 1;
    for (int k = 0; k < modes; ++k) {
        d *= static_cast<std::size_t>(n_max + 1);
    }
    return d;
}

void FockSpec::validate() const {
    if (modes < 1 || modes > 2) {
        throw ConfigError("fock: modes must be 1 or 2");
    }
    if (n_max < 0) {
        throw ConfigError("fock: n_max must be >= 0");
    }
    if (dimension() > guard) {
        throw ConfigError("fock: dimension " + std::to_string(dimension()) + " exceeds guard " +
                          std::to_string(guard));
    }
}

FockHamiltonian build_hamiltonian(const FockSpec& spec, const BathSpec& bath, HamiltonianVariant variant,
                                  double omega0, double f_O, double f_OE) {
    spec.validate();
    if (bath.size() != spec.modes) {
        throw DimensionError("build_hamiltonian: bath mode count differs from Fock spec");
    }
    const std::size_t bd = spec.bath_dimension();
    const double self = 0.5 * omega0 * f_O;
    Triplets tr;
    tr.reserve(2 * bd * (2 + 2 * static_cast<std::size_t>(spec.modes)));
    for (int s = 0; s < 2; ++s) {
        const double sz = (s == 0) ? 1.0 : -1.0;
        const auto row0 = static_cast<std::size_t>(s) * bd;
        for (std::size_t b = 0; b < bd; ++b) {
            double diag = 0.0;
            for (int k = 0; k < spec.modes; ++k) {
                diag += bath.omegas(k) * occupation(b, k, spec.n_max);
            }
            if (variant == HamiltonianVariant::sigma_z_selfenergy) {
                diag += sz * self;
            } else if (self != 0.0) {
                tr.emplace_back(row0 + b, (1 - s) * bd + b, self);
            }
            if (diag != 0.0) {
                tr.emplace_back(row0 + b, row0 + b, diag);
            }
            for (int k = 0; k < spec.modes; ++k) {
                const int n = occupation(b, k, spec.n_max);
                const double c = f_OE * bath.gs(k);
                if (n < spec.n_max && c != 0.0) {
                    const std::size_t up = b + stride(k, spec.n_max);
                    const double v = sz * c * std::sqrt(static_cast<double>(n + 1));
                    tr.emplace_back(row0 + up, row0 + b, v);
                    tr.emplace_back(row0 + b, row0 + up, v);
                }
            }
        }
    }
    const auto dim = static_cast<Index>(spec.dimension());
    FockHamiltonian h(dim, dim);
    h.setFromTriplets(tr.begin(), tr.end());
    return h;
}

FockHamiltonian parity_operator(const FockSpec& spec) {
    spec.validate();
    const std::size_t bd = spec.bath_dimension();
    Triplets tr;
    for (std::size_t b = 0; b < bd; ++b) {
        int total = 0;
        for (int k = 0; k < spec.modes; ++k) {
            total += occupation(b, k, spec.n_max);
        }
        const double sign = (total % 2 == 0) ? 1.0 : -1.0;
        tr.emplace_back(b, bd + b, sign);
        tr.emplace_back(bd + b, b, sign);
    }
    const auto dim = static_cast<Index>(spec.dimension());
    FockHamiltonian p(dim, dim);
    p.setFromTriplets(tr.begin(), tr.end());
    return p;
}

std::vector<FockState> propagate_exact(const FockState& psi0, const FockHamiltonian& h,
                                       const std::vector<double>& times, std::size_t dense_limit) {
    if (psi0.size() != h.rows()) {
        throw DimensionError("propagate_exact: state and Hamiltonian differ in dimension");
    }
    std::vector<FockState> out;
    out.reserve(times.size());
    if (static_cast<std::size_t>(h.rows()) <= dense_limit) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(h)};
        const Eigen::MatrixXcd v = es.eigenvectors().cast<cplx>();
        const Eigen::VectorXcd c0 = v.adjoint() * psi0;
        for (const double t : times) {
            const Eigen::VectorXcd phase =
                (es.eigenvalues().array() * (-t)).unaryExpr([](double x) { return std::polar(1.0, x); });
            out.push_back(v * (phase.asDiagonal() * c0));
        }
        return out;
    }
    FockState psi = psi0;
    double t_now = 0.0;
    for (const double t : times) {
        if (t < t_now) {
            throw ConfigError("propagate_exact: times must be ascending for Krylov stepping");
        }
        if (t > t_now) {
            lanczos_advance(h, psi, t - t_now, 40, 1e-13);
            t_now = t;
        }
        out.push_back(psi);
    }
    return out;
}

CoherentEmbedding coherent_in_fock(cplx gamma, int n_max) {
    if (n_max < 0) {
        throw ConfigError("coherent_in_fock: n_max must be >= 0");
    }
    CoherentEmbedding e;
    e.amps.resize(n_max + 1);
    cplx a = std::exp(-0.5 * std::norm(gamma));
    for (int n = 0; n <= n_max; ++n) {
        e.amps(n) = a;
        a *= gamma / std::sqrt(static_cast<double>(n + 1));
    }
    e.truncation_error = std::max(0.0, 1.0 - e.amps.squaredNorm());
    return e;
}

FockState product_state(const FockSpec& spec, const Spinor& spin, const std::vector<Eigen::VectorXcd>& modes) {
    spec.validate();
    if (static_cast<int>(modes.size()) != spec.modes) {
        throw DimensionError("product_state: one amplitude vector per mode required");
    }
    const std::size_t bd = spec.bath_dimension();
    Eigen::VectorXcd bath(static_cast<Index>(bd));
    for (std::size_t b = 0; b < bd; ++b) {
        cplx v = 1.0;
        for (int k = 0; k < spec.modes; ++k) {
            const auto& m = modes[static_cast<std::size_t>(k)];
            if (m.size() != spec.n_max + 1) {
                throw DimensionError("product_state: mode vector length must be n_max + 1");
            }
            v *= m(occupation(b, k, spec.n_max));
        }
        bath(static_cast<Index>(b)) = v;
    }
    FockState psi(2 * bath.size());
    psi.head(bath.size()) = spin(0) * bath;
    psi.tail(bath.size()) = spin(1) * bath;
    return psi;
}

FockState d2_to_fock(const FockSpec& spec, const D2State& state) {
    if (state.modes() != spec.modes) {
        throw DimensionError("d2_to_fock: mode count differs from Fock spec");
    }
    FockState psi = FockState::Zero(static_cast<Index>(spec.dimension()));
    for (Index m = 0; m < state.multiplicity(); ++m) {
        std::vector<Eigen::VectorXcd> modes;
        for (Index k = 0; k < state.modes(); ++k) {
            modes.push_back(coherent_in_fock(state.gammas(m, k), spec.n_max).amps);
        }
        psi += product_state(spec, state.amps.row(m).transpose(), modes);
    }
    return psi;
}

SpinDensity fock_spin_density(const FockSpec& spec, const FockState& psi) {
    const auto bd = static_cast<Index>(spec.bath_dimension());
    if (psi.size() != 2 * bd) {
        throw DimensionError("fock_spin_density: state dimension mismatch");
    }
    SpinDensity rho;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            rho(a, b) = psi.segment(b * bd, bd).dot(psi.segment(a * bd, bd));
        }
    }
    const double tr = std::real(rho.trace());
    if (!(tr > 0.0)) {
        throw NumericalError("fock_spin_density: zero state");
    }
    rho /= tr;
    return 0.5 * (rho + rho.adjoint());
}

double fock_expectation(const FockHamiltonian& op, const FockState& psi) {
    return std::real(psi.dot(op * psi)) / psi.squaredNorm();
}

TraceSample fock_sample(const FockSpec& spec, const FockHamiltonian& h, const FockState& psi, double t) {
    TraceSample s;
    s.t = t;
    const SpinDensity rho = fock_spin_density(spec, psi);
    s.a = bloch_vector(rho);
    s.norm = psi.squaredNorm();
    s.energy = fock_expectation(h, psi);
    s.s_lin = linear_entropy(rho);
    s.s_spin = spin_entropy(rho);
    s.s_env = s.s_spin;
    s.multiplicity = 0;
    return s;
}

Fig1Case parse_fig1_case(std::string_view name) {
    if (name == "ground") return Fig1Case::ground;
    if (name == "even_superposition") return Fig1Case::even_superposition;
    if (name == "odd_superposition") return Fig1Case::odd_superposition;
    if (name == "mixed") return Fig1Case::mixed;
    throw ConfigError("unknown fig1 case '" + std::string(name) + "'");
}

std::string_view to_string(Fig1Case c) {
    switch (c) {
        case Fig1Case::ground: return "ground";
        case Fig1Case::even_superposition: return "even_superposition";
        case Fig1Case::odd_superposition: return "odd_superposition";
        case Fig1Case::mixed: return "mixed";
    }
    return "?";
}

void Fig1Params::validate() const {
    if (!(omega1 > 0.0)) throw ConfigError("fig1.omega1 must be > 0");
    if (!(coupling >= 0.0)) throw ConfigError("fig1.coupling must be >= 0");
    if (levels < 1) throw ConfigError("fig1.levels must be >= 1");
    if (n_max < 2 * levels) throw ConfigError("fig1.n_max must be >= 2 * levels");
    if (!(t_end > 0.0) || !(dt > 0.0)) throw ConfigError("fig1.t_end and fig1.dt must be > 0");
}

Eigen::VectorXcd fig1_bath_state(Fig1Case c, const Fig1Params& params) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(params.n_max + 1);
    switch (c) {
        case Fig1Case::ground:
            v(0) = 1.0;
            break;
        case Fig1Case::even_superposition:
            for (int k = 0; k < params.levels; ++k) v(2 * k) = 1.0;
            break;
        case Fig1Case::odd_superposition:
            for (int k = 0; k < params.levels; ++k) v(2 * k + 1) = 1.0;
            break;
        case Fig1Case::mixed:
            for (int k = 0; k < params.levels; ++k) v(k) = 1.0;
            break;
    }
    return v / v.norm();
}

std::vector<TraceSample> fig1_experiment(Fig1Case c, const Fig1Params& params) {
    params.validate();
    FockSpec spec;
    spec.modes = 1;
    spec.n_max = params.n_max;
    BathSpec bath;
    bath.omegas = Eigen::VectorXd::Constant(1, params.omega1);
    bath.gs = Eigen::VectorXd::Constant(1, params.coupling);
    const FockHamiltonian h =
        build_hamiltonian(spec, bath, HamiltonianVariant::sigma_x_selfenergy, params.omega0, 1.0, 1.0);
    const FockState psi0 = product_state(spec, spinor(SpinPreparation::plus_x), {fig1_bath_state(c, params)});
    std::vector<double> times;
    const auto n = static_cast<long>(std::floor(params.t_end / params.dt + 1e-9));
    for (long i = 0; i <= n; ++i) {
        times.push_back(static_cast<double>(i) * params.dt);
    }
    const std::vector<FockState> states = propagate_exact(psi0, h, times);
    std::vector<TraceSample> out;
    out.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        out.push_back(fock_sample(spec, h, states[i], times[i]));
    }
    return out;
}

}  // namespace spinmeas
