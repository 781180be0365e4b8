#include "spinmeas/d2_state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spinmeas/coherent_algebra.hpp"

namespace spinmeas {

void D2State::validate() const {
    if (amps.rows() < 1) {
        throw DimensionError("D2State: multiplicity must be >= 1");
    }
    if (gammas.rows() != amps.rows()) {
        throw DimensionError("D2State: amplitude and configuration counts differ");
    }
    if (!amps.allFinite() || !gammas.allFinite()) {
        throw NumericalError("D2State: non-finite parameters");
    }
}

SpinPreparation parse_spin_preparation(std::string_view name) {
    if (name == "plus_x") return SpinPreparation::plus_x;
    if (name == "minus_x") return SpinPreparation::minus_x;
    if (name == "plus_y") return SpinPreparation::plus_y;
    if (name == "minus_y") return SpinPreparation::minus_y;
    if (name == "plus_z") return SpinPreparation::plus_z;
    if (name == "minus_z") return SpinPreparation::minus_z;
    throw ConfigError("unknown spin preparation '" + std::string(name) + "'");
}

std::string_view to_string(SpinPreparation spin) {
    switch (spin) {
        case SpinPreparation::plus_x: return "plus_x";
        case SpinPreparation::minus_x: return "minus_x";
        case SpinPreparation::plus_y: return "plus_y";
        case SpinPreparation::minus_y: return "minus_y";
        case SpinPreparation::plus_z: return "plus_z";
        case SpinPreparation::minus_z: return "minus_z";
    }
    return "?";
}

Spinor spinor(SpinPreparation spin) {
    const double r = std::numbers::sqrt2 / 2.0;
    switch (spin) {
        case SpinPreparation::plus_x: return {r, r};
        case SpinPreparation::minus_x: return {r, -r};
        case SpinPreparation::plus_y: return {r, cplx(0.0, r)};
        case SpinPreparation::minus_y: return {r, cplx(0.0, -r)};
        case SpinPreparation::plus_z: return {1.0, 0.0};
        case SpinPreparation::minus_z: return {0.0, 1.0};
    }
    return {1.0, 0.0};
}

Spinor spinor_from_bloch(const BlochVector& n) {
    const double len = std::sqrt(n.norm_squared());
    const double z = std::clamp(n.z / len, -1.0, 1.0);
    const double theta = std::acos(z);
    const double phi = std::atan2(n.y, n.x);
    return {std::cos(0.5 * theta), std::polar(std::sin(0.5 * theta), phi)};
}

double norm_squared(const D2State& state) {
    const Eigen::MatrixXcd s = gram_matrix(state.gammas);
    double total = 0.0;
    for (int c = 0; c < 2; ++c) {
        total += std::real(state.amps.col(c).dot(s * state.amps.col(c)));
    }
    return total;
}

double normalize(D2State& state) {
    const double n2 = norm_squared(state);
    if (!(n2 > 0.0) || !std::isfinite(n2)) {
        throw NumericalError("normalize: state has zero or non-finite norm");
    }
    const double n = std::sqrt(n2);
    state.amps /= n;
    return n;
}

D2State make_product_initial(const Spinor& spin, const MultimodeConfig& bath0, Eigen::Index multiplicity,
                             double displacement) {
    if (multiplicity < 1) {
        throw DimensionError("make_product_initial: multiplicity must be >= 1");
    }
    const Eigen::Index n_modes = bath0.size();
    D2State state;
    state.amps = Eigen::MatrixX2cd::Zero(multiplicity, 2);
    state.amps.row(0) = spin.normalized().transpose();
    state.gammas = bath0.transpose().replicate(multiplicity, 1);

    const Eigen::Index axes = 2 * n_modes;
    for (Eigen::Index k = 0; k + 1 < multiplicity; ++k) {
        const Eigen::Index pair = k / 2;
        const Eigen::Index axis = pair % axes;
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        const double shift = sign * displacement * static_cast<double>(1 + pair / axes);
        const cplx step = (axis % 2 == 0) ? cplx(shift, 0.0) : cplx(0.0, shift);
        state.gammas(k + 1, axis / 2) += step;
    }
    return state;
}

D2State make_product_initial(SpinPreparation spin, const MultimodeConfig& bath0, Eigen::Index multiplicity,
                             double displacement) {
    return make_product_initial(spinor(spin), bath0, multiplicity, displacement);
}

SpinDensity reduced_spin_density(const D2State& state, double* raw_trace) {
    if (!state.amps.allFinite()) {
        throw NumericalError("reduced_spin_density: non-finite amplitudes");
    }
    // rho[s,s'] = sum_{m,m'} C_ms conj(C_m's') <gamma_m'|gamma_m>
    const Eigen::MatrixXcd s = gram_matrix(state.gammas);
    SpinDensity rho;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            rho(a, b) = state.amps.col(b).dot(s * state.amps.col(a));
        }
    }
    const double tr = std::real(rho.trace());
    if (raw_trace != nullptr) {
        *raw_trace = tr;
    }
    if (!(tr > 0.0)) {
        throw NumericalError("reduced_spin_density: vanishing trace");
    }
    rho /= tr;
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return rho;
}

BlochVector bloch_vector(const SpinDensity& rho) {
    // a_i = tr(rho sigma_i)
    return {2.0 * std::real(rho(1, 0)), 2.0 * std::imag(rho(1, 0)), std::real(rho(0, 0) - rho(1, 1))};
}

D2State apply_total_parity(const D2State& state) {
    D2State out = state;
    out.amps.col(0) = state.amps.col(1);
    out.amps.col(1) = state.amps.col(0);
    out.gammas = -state.gammas;
    return out;
}

std::vector<Eigen::Index> parity_pairing(const D2State& state, double tol) {
    const Eigen::Index m = state.multiplicity();
    std::vector<Eigen::Index> pairing(static_cast<std::size_t>(m), -1);
    const auto mismatch = [&](Eigen::Index k, Eigen::Index j) {
        const double spin = std::max(std::abs(state.amps(k, 0) - state.amps(j, 1)),
                                     std::abs(state.amps(k, 1) - state.amps(j, 0)));
        const double bath = m > 0 && state.modes() > 0
                                ? (state.gammas.row(k) + state.gammas.row(j)).cwiseAbs().maxCoeff()
                                : 0.0;
        return std::max(spin, bath);
    };
    for (Eigen::Index k = 0; k < m; ++k) {
        if (pairing[static_cast<std::size_t>(k)] >= 0) continue;
        Eigen::Index match = -1;
        for (Eigen::Index j = k; j < m && match < 0; ++j) {
            if (pairing[static_cast<std::size_t>(j)] < 0 && mismatch(k, j) <= tol) match = j;
        }
        if (match < 0) return {};
        pairing[static_cast<std::size_t>(k)] = match;
        pairing[static_cast<std::size_t>(match)] = k;
    }
    return pairing;
}

void symmetrize_parity(D2State& state, const std::vector<Eigen::Index>& pairing) {
    if (static_cast<Eigen::Index>(pairing.size()) != state.multiplicity()) {
        throw DimensionError("symmetrize_parity: pairing does not match the multiplicity");
    }
    const D2State image = apply_total_parity(state);
    for (Eigen::Index k = 0; k < state.multiplicity(); ++k) {
        const Eigen::Index j = pairing[static_cast<std::size_t>(k)];
        state.amps.row(k) = 0.5 * (state.amps.row(k) + image.amps.row(j));
        state.gammas.row(k) = 0.5 * (state.gammas.row(k) + image.gammas.row(j));
    }
}

namespace {

// cos(pi/2) in double precision is ~6e-17; such blocks are dropped.
constexpr double kNegligibleWeight = 1e-15;

}  // namespace

D2State superpose(const D2State& a, const D2State& b, double phi, double* raw_norm) {
    a.validate();
    b.validate();
    if (a.modes() != b.modes()) {
        throw DimensionError("superpose: bath dimensions differ");
    }
    const double wa = std::cos(phi);
    const double wb = std::sin(phi);
    const Eigen::Index ma = std::abs(wa) < kNegligibleWeight ? 0 : a.multiplicity();
    const Eigen::Index mb = std::abs(wb) < kNegligibleWeight ? 0 : b.multiplicity();
    D2State out;
    out.time = a.time;
    out.amps.resize(ma + mb, 2);
    out.amps.topRows(ma) = wa * a.amps.topRows(ma);
    out.amps.bottomRows(mb) = wb * b.amps.topRows(mb);
    out.gammas.resize(ma + mb, a.modes());
    out.gammas.topRows(ma) = a.gammas.topRows(ma);
    out.gammas.bottomRows(mb) = b.gammas.topRows(mb);
    const double n = normalize(out);
    if (raw_norm != nullptr) {
        *raw_norm = n;
    }
    return out;
}

D2State renormalize_spin_to_pure(const BlochVector& a, const BathSpec& bath, const ThermalParams& thermal,
                                 Rng& rng, Eigen::Index multiplicity, double displacement, double min_length) {
    if (std::sqrt(a.norm_squared()) < min_length) {
        throw NumericalError("renormalize_spin_to_pure: Bloch vector too short to define a direction");
    }
    const MultimodeConfig bath0 = sample_initial_bath(bath, thermal, rng);
    return make_product_initial(spinor_from_bloch(a), bath0, multiplicity, displacement);
}

D2State renormalize_spin_to_pure(const D2State& state, const BathSpec& bath, const ThermalParams& thermal,
                                 Rng& rng, double displacement, double min_length) {
    const BlochVector a = bloch_vector(reduced_spin_density(state));
    return renormalize_spin_to_pure(a, bath, thermal, rng, state.multiplicity(), displacement, min_length);
}

}  // namespace spinmeas
