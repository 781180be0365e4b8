#include "spinmeas/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "spinmeas/coherent_algebra.hpp"

namespace spinmeas {
namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

constexpr double kSigma[2] = {1.0, -1.0};

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// Regularized pseudo-inverse solve of a Hermitian PSD system; eigenvalues
// below reg * lambda_max are suppressed and counted as discarded.
struct FilteredSolve {
    VectorXcd x;
    double projected = 0.0;  // b^H G^+ b
    long discarded = 0;
};

FilteredSolve filtered_solve(const MatrixXcd& g, const VectorXcd& b, double reg, const VectorXcd* b_proj = nullptr) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(g);
    if (es.info() != Eigen::Success) {
        throw NumericalError("metric eigendecomposition failed");
    }
    const VectorXd& lambda = es.eigenvalues();
    const double lmax = lambda(lambda.size() - 1);
    if (!(lmax > 0.0) || !std::isfinite(lmax)) {
        throw NumericalError("metric has no positive eigenvalue");
    }
    const double cutoff = reg * lmax;
    Index first = 0;
    while (first < lambda.size() && lambda(first) <= cutoff) {
        ++first;
    }
    FilteredSolve out;
    out.discarded = static_cast<long>(first);
    // Smooth filter lambda / (lambda^2 + cutoff^2): a hard cut makes the
    // velocity field jump whenever an eigenvalue crosses the threshold.
    const auto& v = es.eigenvectors();
    const VectorXd inv = lambda.array() / (lambda.array().square() + cutoff * cutoff);
    const VectorXcd w = v.adjoint() * b;
    out.x = v * (inv.cast<cplx>().asDiagonal() * w);
    if (b_proj != nullptr) {
        const VectorXcd wp = v.adjoint() * (*b_proj);
        out.projected = (wp.cwiseAbs2().array() * inv.array()).sum();
    }
    return out;
}

VectorXcd shifted_solve(const MatrixXcd& g, const VectorXcd& b, double reg) {
    MatrixXcd shifted = g;
    shifted.diagonal().array() += reg * g.diagonal().real().maxCoeff();
    const Eigen::LLT<MatrixXcd> llt(shifted);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("shifted metric is not positive definite");
    }
    return llt.solve(b);
}

// Overlaps and bath-operator kernels between all configuration pairs.
struct PairKernels {
    MatrixXcd S;   // <gamma_m|gamma_m'>
    MatrixXcd B;   // sum_n w_n conj(g_mn) g_m'n
    VectorXcd xl;  // sum_n c_n conj(g_mn)
    VectorXcd xr;  // sum_n c_n g_mn
};

PairKernels pair_kernels(const ConfigSet& gammas, const VectorXd& omegas, const VectorXd& couplings) {
    PairKernels k;
    k.S = gram_matrix(gammas);
    const MatrixXcd gc = gammas.conjugate();
    k.B = gc * omegas.asDiagonal() * gammas.transpose();
    k.xl = gc * couplings.cast<cplx>();
    k.xr = gammas * couplings.cast<cplx>();
    return k;
}

}  // namespace

void IntegratorConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ConfigError(std::string("integrator.") + name + " must be > 0");
    };
    positive(rel_tol, "rel_tol");
    positive(abs_tol, "abs_tol");
    positive(metric_reg, "metric_reg");
    positive(spawn_threshold, "spawn_threshold");
    positive(h_init, "h_init");
    positive(h_min, "h_min");
    positive(h_max, "h_max");
    if (!(apoptosis_overlap > 0.9 && apoptosis_overlap < 1.0)) {
        throw ConfigError("integrator.apoptosis_overlap must lie in (0.9, 1)");
    }
    if (max_multiplicity < 0) throw ConfigError("integrator.max_multiplicity must be >= 0");
    if (max_steps < 1) throw ConfigError("integrator.max_steps must be >= 1");
}

std::string to_string(MetricSolver solver) {
    return solver == MetricSolver::spectral ? "spectral" : "shifted_cholesky";
}

MetricSolver parse_metric_solver(const std::string& name) {
    if (name == "spectral") return MetricSolver::spectral;
    if (name == "shifted_cholesky") return MetricSolver::shifted_cholesky;
    throw ConfigError("unknown metric solver '" + name + "'");
}

HamiltonianTerms hamiltonian_terms(const BathSpec& bath, const Protocol& protocol, double t) {
    HamiltonianTerms terms;
    const double self = 0.5 * protocol.omega0 * protocol.f_O(t);
    if (protocol.variant == HamiltonianVariant::sigma_x_selfenergy) {
        terms.eps_x = self;
    } else {
        terms.eps_z = self;
    }
    terms.couplings = protocol.f_OE(t) * bath.gs;
    return terms;
}

Eigen::Matrix2cd hamiltonian_block(const MultimodeConfig& a, const MultimodeConfig& b, const BathSpec& bath,
                                   const HamiltonianTerms& terms) {
    const auto el = matrix_elements(a, b, bath.omegas, terms.couplings);
    Eigen::Matrix2cd h;
    h(0, 0) = el.bath_energy + terms.eps_z * el.overlap + el.coupling;
    h(1, 1) = el.bath_energy - terms.eps_z * el.overlap - el.coupling;
    h(0, 1) = terms.eps_x * el.overlap;
    h(1, 0) = terms.eps_x * el.overlap;
    return h;
}

double energy_expectation(const D2State& state, const BathSpec& bath, const Protocol& protocol, double t) {
    state.validate();
    if (state.modes() != bath.size()) {
        throw DimensionError("energy_expectation: state and bath differ in mode count");
    }
    const HamiltonianTerms terms = hamiltonian_terms(bath, protocol, t);
    cplx e = 0.0;
    const Index m_count = state.multiplicity();
    for (Index m = 0; m < m_count; ++m) {
        const MultimodeConfig gm = state.gammas.row(m).transpose();
        for (Index mp = 0; mp < m_count; ++mp) {
            const MultimodeConfig gmp = state.gammas.row(mp).transpose();
            const Eigen::Matrix2cd h = hamiltonian_block(gm, gmp, bath, terms);
            e += (state.amps.row(m).conjugate() * h * state.amps.row(mp).transpose()).value();
        }
    }
    const double n2 = norm_squared(state);
    if (!(n2 > 0.0)) {
        throw NumericalError("energy_expectation: state is not normalizable");
    }
    return std::real(e) / n2;
}

double energy_square_expectation(const D2State& state, const BathSpec& bath, const HamiltonianTerms& terms) {
    const ConfigSet& g = state.gammas;
    const auto& c = state.amps;
    const VectorXd& w = bath.omegas;
    const VectorXd& cp = terms.couplings;
    const PairKernels k = pair_kernels(g, w, cp);
    const MatrixXcd gc = g.conjugate();
    const MatrixXcd w2 = gc * w.cwiseAbs2().asDiagonal() * g.transpose();
    const VectorXd wc = w.cwiseProduct(cp);
    const VectorXcd yl = gc * wc.cast<cplx>();
    const VectorXcd yr = g * wc.cast<cplx>();
    const double csq = cp.squaredNorm();
    const double ex2 = terms.eps_x * terms.eps_x;

    // Per block: <K_s^2>/S = K_s^2 + W2 + sigma Y + sum c^2 with K_s = B + sigma (eps_z + X);
    // off-diagonal spin blocks carry eps_x (K_+ + K_-) = 2 eps_x H_bath.
    cplx total = 0.0;
    const Index m_count = state.multiplicity();
    for (Index m = 0; m < m_count; ++m) {
        for (Index mp = 0; mp < m_count; ++mp) {
            const cplx x = k.xl(m) + k.xr(mp);
            const cplx y = yl(m) + yr(mp);
            cplx blk = 0.0;
            for (int s = 0; s < 2; ++s) {
                const cplx ks = k.B(m, mp) + kSigma[s] * (terms.eps_z + x);
                const cplx diag = ks * ks + w2(m, mp) + kSigma[s] * y + csq + ex2;
                blk += std::conj(c(m, s)) * c(mp, s) * diag;
                blk += std::conj(c(m, s)) * c(mp, 1 - s) * (2.0 * terms.eps_x * k.B(m, mp));
            }
            total += k.S(m, mp) * blk;
        }
    }
    return std::real(total) / norm_squared(state);
}

TdvpDerivative tdvp_derivative(const D2State& state, const BathSpec& bath, const HamiltonianTerms& terms,
                               double metric_reg, bool want_residual, MetricSolver solver) {
    const Index m_count = state.multiplicity();
    const Index n_modes = state.modes();
    if (n_modes != bath.size() || terms.couplings.size() != n_modes) {
        throw DimensionError("tdvp_derivative: state and bath differ in mode count");
    }
    const auto& c = state.amps;
    const ConfigSet& g = state.gammas;
    const VectorXd& w = bath.omegas;
    const VectorXd& cp = terms.couplings;
    const PairKernels k = pair_kernels(g, w, cp);
    const MatrixXcd& s = k.S;

    // T_s = S o K_s with K_s(m,m') = B + sigma_s (eps_z + X(m,m'))
    MatrixXcd t_s[2];
    for (int sp = 0; sp < 2; ++sp) {
        t_s[sp].resize(m_count, m_count);
        for (Index j = 0; j < m_count; ++j) {
            for (Index i = 0; i < m_count; ++i) {
                t_s[sp](i, j) = s(i, j) * (k.B(i, j) + kSigma[sp] * (terms.eps_z + k.xl(i) + k.xr(j)));
            }
        }
    }

    // Projections of H|Psi> onto the tangent vectors.
    Eigen::MatrixX2cd h(m_count, 2);
    MatrixXcd r = MatrixXcd::Zero(m_count, n_modes);
    for (int sp = 0; sp < 2; ++sp) {
        const int other = 1 - sp;
        h.col(sp) = t_s[sp] * c.col(sp) + terms.eps_x * (s * c.col(other));
        const MatrixXcd dg = c.col(sp).asDiagonal() * g;
        const MatrixXcd sdg = s * dg;
        MatrixXcd inner = t_s[sp] * dg + sdg * w.asDiagonal();
        inner += kSigma[sp] * (s * c.col(sp)) * cp.cast<cplx>().transpose();
        inner += terms.eps_x * (s * (c.col(other).asDiagonal() * g));
        r += c.col(sp).conjugate().asDiagonal() * inner;
    }

    TdvpDerivative out;
    out.norm2 = std::real(c.col(0).dot(s * c.col(0)) + c.col(1).dot(s * c.col(1)));
    if (!(out.norm2 > 0.0) || !std::isfinite(out.norm2)) {
        throw NumericalError("tdvp_derivative: state is not normalizable");
    }
    out.energy = std::real(c.col(0).dot(h.col(0)) + c.col(1).dot(h.col(1))) / out.norm2;

    // Metric over (u_+, u_-, gamma_dot) with gamma_dot indexed m * N + n.
    const Index off = 2 * m_count;
    const Index dim = off + m_count * n_modes;
    out.dimension = dim;
    MatrixXcd metric = MatrixXcd::Zero(dim, dim);
    metric.block(0, 0, m_count, m_count) = s;
    metric.block(m_count, m_count, m_count, m_count) = s;
    for (int sp = 0; sp < 2; ++sp) {
        for (Index m = 0; m < m_count; ++m) {
            for (Index mp = 0; mp < m_count; ++mp) {
                const cplx f = c(mp, sp) * s(m, mp);
                for (Index n = 0; n < n_modes; ++n) {
                    metric(sp * m_count + m, off + mp * n_modes + n) = f * std::conj(g(m, n));
                }
            }
        }
    }
    metric.block(off, 0, dim - off, off) = metric.block(0, off, off, dim - off).adjoint();
    const MatrixXcd rho = c.conjugate() * c.transpose();
    for (Index m = 0; m < m_count; ++m) {
        for (Index mp = 0; mp < m_count; ++mp) {
            const cplx rr = rho(m, mp) * s(m, mp);
            auto blk = metric.block(off + m * n_modes, off + mp * n_modes, n_modes, n_modes);
            blk.noalias() = rr * (g.row(mp).transpose() * g.row(m).conjugate());
            blk.diagonal().array() += rr;
        }
    }

    VectorXcd b(dim);
    b.head(m_count) = h.col(0);
    b.segment(m_count, m_count) = h.col(1);
    for (Index m = 0; m < m_count; ++m) {
        b.segment(off + m * n_modes, n_modes) = r.row(m).transpose();
    }

    // Reference velocity: spin-conditioned classical motion for the bath,
    // fixed amplitudes. It governs directions the metric cannot resolve
    // (e.g. configurations that carry no amplitude).
    VectorXd z(m_count);
    for (Index m = 0; m < m_count; ++m) {
        const double up = std::norm(c(m, 0));
        const double dn = std::norm(c(m, 1));
        z(m) = (up + dn > 0.0) ? (up - dn) / (up + dn) : 0.0;
    }
    MatrixXcd slow_ref(m_count, n_modes);  // -i c_n z_m
    for (Index m = 0; m < m_count; ++m) {
        for (Index n = 0; n < n_modes; ++n) {
            slow_ref(m, n) = -I * (cp(n) * z(m));
        }
    }
    VectorXcd x_ref = VectorXcd::Zero(dim);
    for (Index m = 0; m < m_count; ++m) {
        for (Index n = 0; n < n_modes; ++n) {
            x_ref(off + m * n_modes + n) = slow_ref(m, n) - I * (w(n) * g(m, n));
        }
    }

    const VectorXcd target = -I * b - metric * x_ref;
    FilteredSolve sol;
    if (solver == MetricSolver::spectral || want_residual) {
        sol = filtered_solve(metric, target, metric_reg, want_residual ? &b : nullptr);
    } else {
        sol.x = shifted_solve(metric, target, metric_reg);
    }
    out.discarded = sol.discarded;
    const VectorXcd& delta = sol.x;

    out.gammas_dot_slow.resize(m_count, n_modes);
    for (Index m = 0; m < m_count; ++m) {
        for (Index n = 0; n < n_modes; ++n) {
            out.gammas_dot_slow(m, n) = slow_ref(m, n) + delta(off + m * n_modes + n);
        }
    }
    out.gammas_dot = out.gammas_dot_slow;
    for (Index n = 0; n < n_modes; ++n) {
        out.gammas_dot.col(n) -= I * w(n) * g.col(n);
    }
    // C = A exp(|gamma|^2 / 2): dC = u + C Re(gamma^H gamma_dot); the free rotation drops out.
    out.amps_dot.resize(m_count, 2);
    for (Index m = 0; m < m_count; ++m) {
        const double stretch = std::real(g.row(m).dot(out.gammas_dot_slow.row(m)));
        for (int sp = 0; sp < 2; ++sp) {
            out.amps_dot(m, sp) = delta(sp * m_count + m) + c(m, sp) * stretch;
        }
    }

    if (want_residual) {
        const double h2 = energy_square_expectation(state, bath, terms) * out.norm2;
        const double res2 = std::max(0.0, h2 - sol.projected);
        out.residual = std::sqrt(res2 / out.norm2);
    } else {
        out.residual = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

D2State remove_configuration(const D2State& state, Index drop, double metric_reg) {
    const Index m_count = state.multiplicity();
    if (m_count < 2 || drop < 0 || drop >= m_count) {
        throw DimensionError("remove_configuration: invalid index");
    }
    const MatrixXcd s = gram_matrix(state.gammas);
    std::vector<Index> keep;
    for (Index m = 0; m < m_count; ++m) {
        if (m != drop) keep.push_back(m);
    }
    const Index kcount = static_cast<Index>(keep.size());
    MatrixXcd skk(kcount, kcount);
    Eigen::MatrixX2cd proj(kcount, 2);
    D2State out;
    out.time = state.time;
    out.gammas.resize(kcount, state.modes());
    for (Index i = 0; i < kcount; ++i) {
        out.gammas.row(i) = state.gammas.row(keep[i]);
        for (Index j = 0; j < kcount; ++j) {
            skk(i, j) = s(keep[i], keep[j]);
        }
        proj.row(i) = s.row(keep[i]) * state.amps;
    }
    out.amps.resize(kcount, 2);
    for (int sp = 0; sp < 2; ++sp) {
        out.amps.col(sp) = filtered_solve(skk, proj.col(sp), metric_reg).x;
    }
    return out;
}

Propagator::Propagator(BathSpec bath, Protocol protocol, IntegratorConfig config)
    : bath_(std::move(bath)), protocol_(std::move(protocol)), config_(config), stages_(7) {
    bath_.validate();
    protocol_.validate();
    config_.validate();
}

Propagator::Vec Propagator::pack(const D2State& state) const {
    const Index m_count = state.multiplicity();
    const Index n_modes = state.modes();
    Vec y(2 * m_count + m_count * n_modes);
    y.head(2 * m_count) = Eigen::Map<const Vec>(state.amps.data(), 2 * m_count);
    for (Index n = 0; n < n_modes; ++n) {
        const cplx rot = std::polar(1.0, bath_.omegas(n) * state.time);
        y.segment(2 * m_count + n * m_count, m_count) = state.gammas.col(n) * rot;
    }
    return y;
}

void Propagator::unpack(const Vec& y, double t, Index multiplicity, D2State& state) const {
    const Index n_modes = bath_.size();
    state.time = t;
    state.amps = Eigen::Map<const Eigen::MatrixX2cd>(y.data(), multiplicity, 2);
    state.gammas.resize(multiplicity, n_modes);
    for (Index n = 0; n < n_modes; ++n) {
        const cplx rot = std::polar(1.0, -bath_.omegas(n) * t);
        state.gammas.col(n) = y.segment(2 * multiplicity + n * multiplicity, multiplicity) * rot;
    }
}

Propagator::Vec Propagator::rhs(double t, const Vec& y, Index multiplicity) {
    D2State st;
    unpack(y, t, multiplicity, st);
    const HamiltonianTerms terms = hamiltonian_terms(bath_, protocol_, t);
    const TdvpDerivative d = tdvp_derivative(st, bath_, terms, config_.metric_reg, false, config_.solver);
    ++stats_.rhs_evaluations;
    stats_.max_discarded = std::max(stats_.max_discarded, d.discarded);
    const Index n_modes = bath_.size();
    Vec dy(y.size());
    dy.head(2 * multiplicity) = Eigen::Map<const Vec>(d.amps_dot.data(), 2 * multiplicity);
    for (Index n = 0; n < n_modes; ++n) {
        const cplx rot = std::polar(1.0, bath_.omegas(n) * t);
        dy.segment(2 * multiplicity + n * multiplicity, multiplicity) = d.gammas_dot_slow.col(n) * rot;
    }
    if (!dy.allFinite()) {
        throw NumericalError("non-finite time derivative");
    }
    return dy;
}

double Propagator::attempt(double t, const Vec& y, const Vec& k1, double h, Index multiplicity, Vec& y_new,
                           Vec& k_new) {
    auto& k = stages_;
    k[1] = rhs(t + c2 * h, y + h * (a21 * k1), multiplicity);
    k[2] = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k[1]), multiplicity);
    k[3] = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k[1] + a43 * k[2]), multiplicity);
    k[4] = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k[1] + a53 * k[2] + a54 * k[3]), multiplicity);
    k[5] = rhs(t + h, y + h * (a61 * k1 + a62 * k[1] + a63 * k[2] + a64 * k[3] + a65 * k[4]), multiplicity);
    y_new = y + h * (a71 * k1 + a73 * k[2] + a74 * k[3] + a75 * k[4] + a76 * k[5]);
    k_new = rhs(t + h, y_new, multiplicity);
    const Vec err = h * (e1 * k1 + e3 * k[2] + e4 * k[3] + e5 * k[4] + e6 * k[5] + e7 * k_new);
    double acc = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        const double scale = config_.abs_tol + config_.rel_tol * std::max(std::abs(y(i)), std::abs(y_new(i)));
        const double q = std::abs(err(i)) / scale;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

namespace {

// symmetrize_parity on the packed vector; the projection commutes with the
// interaction-picture rotation.
void symmetrize_packed(Eigen::VectorXcd& y, Index m_count, const std::vector<Index>& pairing) {
    const Eigen::VectorXcd src = y;
    const Index n_modes = (y.size() - 2 * m_count) / m_count;
    for (Index k = 0; k < m_count; ++k) {
        const Index j = pairing[static_cast<std::size_t>(k)];
        y(k) = 0.5 * (src(k) + src(m_count + j));
        y(m_count + k) = 0.5 * (src(m_count + k) + src(j));
        for (Index n = 0; n < n_modes; ++n) {
            const Index base = 2 * m_count + n * m_count;
            y(base + k) = 0.5 * (src(base + k) - src(base + j));
        }
    }
}

double step_factor(double err) {
    if (err == 0.0) return 5.0;
    return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
}

}  // namespace

double Propagator::step(D2State& state, double h_try, double t_limit) {
    state.validate();
    const Index m_count = state.multiplicity();
    const double t = state.time;
    const Vec y = pack(state);
    const Vec k1 = rhs(t, y, m_count);
    double h = std::min({h_try, config_.h_max, t_limit - t});
    if (!(h > 0.0)) {
        throw NumericalError("step: no room before t_limit");
    }
    Vec y_new, k_new;
    while (true) {
        const double err = attempt(t, y, k1, h, m_count, y_new, k_new);
        if (err <= 1.0) {
            ++stats_.accepted;
            unpack(y_new, t + h, m_count, state);
            return h * step_factor(err);
        }
        ++stats_.rejected;
        h *= step_factor(err);
        if (h < config_.h_min) {
            throw NumericalError("step size underflow at t = " + std::to_string(t));
        }
    }
}

TraceSample Propagator::observe(const D2State& state) const {
    TraceSample out;
    out.t = state.time;
    const SpinDensity rho = reduced_spin_density(state);
    out.a = bloch_vector(rho);
    out.norm = norm_squared(state);
    out.energy = energy_expectation(state, bath_, protocol_, state.time);
    out.s_lin = linear_entropy(rho);
    out.s_spin = spin_entropy(rho);
    out.s_env = environment_entropy(state);
    out.multiplicity = static_cast<long>(state.multiplicity());
    return out;
}

bool Propagator::adapt_basis(D2State& state, std::vector<BasisEvent>& events, long max_multiplicity) const {
    bool changed = false;

    // Apoptosis: remove the lighter member of any nearly degenerate pair.
    while (state.multiplicity() > 1) {
        const MatrixXcd s = gram_matrix(state.gammas);
        double worst = 0.0;
        Index wi = -1;
        Index wj = -1;
        for (Index j = 1; j < s.cols(); ++j) {
            for (Index i = 0; i < j; ++i) {
                if (std::abs(s(i, j)) > worst) {
                    worst = std::abs(s(i, j));
                    wi = i;
                    wj = j;
                }
            }
        }
        if (worst <= config_.apoptosis_overlap) {
            break;
        }
        const double pi = state.amps.row(wi).squaredNorm();
        const double pj = state.amps.row(wj).squaredNorm();
        const Index drop = (pi < pj) ? wi : wj;
        BasisEvent ev;
        ev.t = state.time;
        ev.kind = "apoptosis";
        ev.multiplicity_before = static_cast<long>(state.multiplicity());
        ev.value = worst;
        ev.detail = "removed configuration " + std::to_string(drop);
        state = remove_configuration(state, drop);
        const double kept = normalize(state);
        ev.detail += ", norm before renormalization " + std::to_string(kept * kept);
        ev.multiplicity_after = static_cast<long>(state.multiplicity());
        events.push_back(ev);
        changed = true;
    }

    // Spawn from the unit von Neumann lattice around occupied configurations.
    const HamiltonianTerms terms = hamiltonian_terms(bath_, protocol_, state.time);
    const TdvpDerivative d = tdvp_derivative(state, bath_, terms, config_.metric_reg, true);
    if (!(d.residual > config_.spawn_threshold)) {
        return changed;
    }
    const long m_now = static_cast<long>(state.multiplicity());
    if (m_now >= max_multiplicity) {
        const bool already = !events.empty() && events.back().kind == "warning";
        if (!already) {
            BasisEvent ev;
            ev.t = state.time;
            ev.kind = "warning";
            ev.multiplicity_before = m_now;
            ev.multiplicity_after = m_now;
            ev.value = d.residual;
            ev.detail = "multiplicity cap reached with residual above spawn threshold";
            events.push_back(ev);
        }
        return changed;
    }

    const Index m_count = state.multiplicity();
    const Index n_modes = state.modes();
    const MatrixXcd s = gram_matrix(state.gammas);
    // Holomorphic amplitude rates u = dC - C Re(gamma^H dgamma).
    Eigen::MatrixX2cd u(m_count, 2);
    for (Index m = 0; m < m_count; ++m) {
        const double stretch = std::real(state.gammas.row(m).dot(d.gammas_dot.row(m)));
        u.row(m) = d.amps_dot.row(m) - state.amps.row(m) * stretch;
    }
    const double pmax = state.amps.rowwise().squaredNorm().maxCoeff();
    const cplx directions[4] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    double best = -1.0;
    MultimodeConfig best_cfg;
    for (Index m = 0; m < m_count; ++m) {
        if (state.amps.row(m).squaredNorm() < 1e-6 * pmax) continue;
        for (Index n = 0; n < n_modes; ++n) {
            for (const cplx& dir : directions) {
                MultimodeConfig cand = state.gammas.row(m).transpose();
                cand(n) += dir;
                // <s, cand| (i dPsi/dt - H Psi)>
                Eigen::Vector2cd proj = Eigen::Vector2cd::Zero();
                for (Index mp = 0; mp < m_count; ++mp) {
                    const MultimodeConfig gmp = state.gammas.row(mp).transpose();
                    const cplx ov = multimode_overlap(cand, gmp);
                    const cplx lift = cand.dot(d.gammas_dot.row(mp).transpose());
                    const Eigen::Matrix2cd hb = hamiltonian_block(cand, gmp, bath_, terms);
                    for (int sp = 0; sp < 2; ++sp) {
                        const cplx dpsi = ov * (u(mp, sp) + state.amps(mp, sp) * lift);
                        proj(sp) += I * dpsi - (hb.row(sp) * state.amps.row(mp).transpose())(0);
                    }
                }
                const double score = proj.squaredNorm();
                if (score > best) {
                    best = score;
                    best_cfg = cand;
                }
            }
        }
    }
    if (best < 0.0) {
        return changed;
    }
    BasisEvent ev;
    ev.t = state.time;
    ev.kind = "spawn";
    ev.multiplicity_before = m_now;
    ev.value = d.residual;
    state.amps.conservativeResize(m_count + 1, Eigen::NoChange);
    state.amps.row(m_count).setZero();
    state.gammas.conservativeResize(m_count + 1, Eigen::NoChange);
    state.gammas.row(m_count) = best_cfg.transpose();
    ev.multiplicity_after = static_cast<long>(state.multiplicity());
    events.push_back(ev);
    return true;
}

BlochTrace Propagator::run(const D2State& initial, const std::vector<double>& sample_times) {
    initial.validate();
    if (initial.modes() != bath_.size()) {
        throw DimensionError("run: state and bath differ in mode count");
    }
    if (sample_times.empty() || !std::is_sorted(sample_times.begin(), sample_times.end())) {
        throw ConfigError("run: sample times must be nonempty and ascending");
    }
    BlochTrace trace;
    D2State state = initial;
    double t = state.time;
    if (sample_times.front() < t - 1e-12) {
        throw ConfigError("run: sample times precede the initial state");
    }
    const long cap = config_.max_multiplicity > 0 ? config_.max_multiplicity
                                                 : 2 * static_cast<long>(initial.multiplicity());
    Index m_count = state.multiplicity();
    Vec y = pack(state);
    Vec k1 = rhs(t, y, m_count);
    Vec y_new, k_new;
    double h = config_.h_init;
    long steps = 0;
    std::vector<Index> pairing;
    if (config_.parity_projection) pairing = parity_pairing(state);

    for (const double ts : sample_times) {
        while (ts - t > 1e-12 * std::max(1.0, std::abs(ts))) {
            double h_try = std::min(h, config_.h_max);
            bool hit = false;
            if (h_try >= ts - t) {
                h_try = ts - t;
                hit = true;
            }
            double err = 0.0;
            while (true) {
                err = attempt(t, y, k1, h_try, m_count, y_new, k_new);
                if (err <= 1.0) break;
                ++stats_.rejected;
                h_try *= step_factor(err);
                hit = false;
                if (h_try < config_.h_min) {
                    throw NumericalError("step size underflow at t = " + std::to_string(t));
                }
            }
            ++stats_.accepted;
            if (++steps > config_.max_steps) {
                throw NumericalError("maximum number of integration steps exceeded");
            }
            const double h_next = h_try * step_factor(err);
            t = hit ? ts : t + h_try;
            y.swap(y_new);
            k1.swap(k_new);
            h = hit ? std::max(h, h_next) : h_next;

            if (!pairing.empty()) symmetrize_packed(y, m_count, pairing);
            if (config_.adaptive) {
                unpack(y, t, m_count, state);
                if (adapt_basis(state, trace.events, cap)) {
                    m_count = state.multiplicity();
                    y = pack(state);
                    k1 = rhs(t, y, m_count);
                    if (!pairing.empty()) pairing = parity_pairing(state, 1e-10);
                }
            }
        }
        unpack(y, t, m_count, state);
        state.time = ts;
        trace.samples.push_back(observe(state));
    }
    trace.final_state = state;
    trace.stats = stats_;
    return trace;
}

D2State step(const D2State& state, const BathSpec& bath, const Protocol& protocol, const IntegratorConfig& cfg,
             double dt_hint) {
    Propagator p(bath, protocol, cfg);
    D2State out = state;
    p.step(out, dt_hint, std::numeric_limits<double>::infinity());
    return out;
}

D2State adapt_basis(const D2State& state, const BathSpec& bath, const Protocol& protocol,
                    const IntegratorConfig& cfg, std::vector<BasisEvent>* events, long max_multiplicity) {
    Propagator p(bath, protocol, cfg);
    D2State out = state;
    std::vector<BasisEvent> local;
    const long cap = max_multiplicity > 0 ? max_multiplicity
                     : cfg.max_multiplicity > 0 ? cfg.max_multiplicity
                                                : 2 * static_cast<long>(state.multiplicity());
    p.adapt_basis(out, events != nullptr ? *events : local, cap);
    return out;
}

BlochTrace run_trajectory(const D2State& initial, const BathSpec& bath, const Protocol& protocol,
                          const IntegratorConfig& cfg, const std::vector<double>& sample_times) {
    Propagator p(bath, protocol, cfg);
    return p.run(initial, sample_times);
}

std::vector<double> sample_grid(double t0, double t_end, double dt) {
    if (!(dt > 0.0) || !(t_end >= t0)) {
        throw ConfigError("sample_grid: need dt > 0 and t_end >= t0");
    }
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((t_end - t0) / dt + 1e-9));
    for (long i = 0; i <= n; ++i) {
        out.push_back(t0 + static_cast<double>(i) * dt);
    }
    if (t_end - out.back() > 1e-9 * std::max(1.0, std::abs(t_end))) {
        out.push_back(t_end);
    }
    return out;
}

}  // namespace spinmeas
