#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/types.hpp"

namespace spinmeas {

// Multimode Davydov D2 state
//
//   |Psi> = sum_m (C_m+ |+> + C_m- |->) |gamma_m>,
//
// spin amplitudes in the sigma_z basis (column 0: up, column 1: down) and
// normalized multimode coherent states |gamma_m> stored row-wise.
struct D2State {
    Eigen::MatrixX2cd amps;  // M x 2
    ConfigSet gammas;        // M x N
    double time = 0.0;

    Eigen::Index multiplicity() const { return amps.rows(); }
    Eigen::Index modes() const { return gammas.cols(); }
    void validate() const;
};

enum class SpinPreparation { plus_x, minus_x, plus_y, minus_y, plus_z, minus_z };

SpinPreparation parse_spin_preparation(std::string_view name);
std::string_view to_string(SpinPreparation spin);

Spinor spinor(SpinPreparation spin);

// Pure spinor with Bloch vector along the unit vector n.
Spinor spinor_from_bloch(const BlochVector& n);

// <Psi|Psi>
double norm_squared(const D2State& state);

// Rescales the amplitudes to unit norm; returns the norm before rescaling.
double normalize(D2State& state);

// Configuration 1 carries the spinor; configurations 2..M are rigid
// displacements of bath0 with zero amplitude. Secondary copies come in +/-
// pairs: pair p is shifted by +-`displacement * (1 + floor(p / 2N))` along
// axis p mod 2N (Re mode 1, Im mode 1, Re mode 2, ...). With odd M and a
// vacuum bath0 the configuration set is closed under gamma -> -gamma.
D2State make_product_initial(const Spinor& spin, const MultimodeConfig& bath0, Eigen::Index multiplicity,
                             double displacement = 0.3);
D2State make_product_initial(SpinPreparation spin, const MultimodeConfig& bath0, Eigen::Index multiplicity,
                             double displacement = 0.3);

// Reduced spin density, trace-renormalized. `raw_trace` (optional) receives
// the trace before renormalization.
SpinDensity reduced_spin_density(const D2State& state, double* raw_trace = nullptr);

BlochVector bloch_vector(const SpinDensity& rho);

// Pi_z = sigma_x exp(i pi sum_n a_n^dag a_n): swaps spin amplitudes, inverts all gammas.
D2State apply_total_parity(const D2State& state);

// Involution k -> pairing[k] of configuration indices under which
// apply_total_parity(state) equals state up to `tol` (max abs parameter
// difference), or empty if there is none.
std::vector<Eigen::Index> parity_pairing(const D2State& state, double tol = 1e-12);

// Averages state with its parity image under `pairing`: projects onto the
// parity-invariant parameter subspace.
void symmetrize_parity(D2State& state, const std::vector<Eigen::Index>& pairing);

// cos(phi) A + sin(phi) B as a 2M-configuration state, normalized. A block
// whose weight vanishes to rounding (phi = 0 or pi/2) is left out. `raw_norm`
// (optional) receives the norm before normalization.
D2State superpose(const D2State& a, const D2State& b, double phi, double* raw_norm = nullptr);

// Fresh product state: pure spin along a/|a|, newly sampled bath.
D2State renormalize_spin_to_pure(const BlochVector& a, const BathSpec& bath, const ThermalParams& thermal,
                                 Rng& rng, Eigen::Index multiplicity, double displacement = 0.3,
                                 double min_length = 1e-6);
D2State renormalize_spin_to_pure(const D2State& state, const BathSpec& bath, const ThermalParams& thermal,
                                 Rng& rng, double displacement = 0.3, double min_length = 1e-6);

}  // namespace spinmeas
