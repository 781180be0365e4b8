#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/d2_state.hpp"
#include "spinmeas/modulation.hpp"
#include "spinmeas/observables.hpp"
#include "spinmeas/types.hpp"

namespace spinmeas {

// Truncated spin x Fock basis. Basis index = spin * bath_dimension + bath
// index, spin 0 = up; the bath index is mixed radix with mode 0 fastest.
struct FockSpec {
    int modes = 1;
    int n_max = 40;
    std::size_t guard = 200'000;

    std::size_t bath_dimension() const;
    std::size_t dimension() const { return 2 * bath_dimension(); }
    void validate() const;
};

using FockState = Eigen::VectorXcd;
using FockHamiltonian = Eigen::SparseMatrix<double>;

// Real symmetric H with constant modulations, zero-point energy dropped.
FockHamiltonian build_hamiltonian(const FockSpec& spec, const BathSpec& bath, HamiltonianVariant variant,
                                  double omega0, double f_O, double f_OE);

// Pi_z = sigma_x (-1)^(sum n).
FockHamiltonian parity_operator(const FockSpec& spec);

// exp(-i H t) psi0 at each time of the grid (relative to t = 0). Dense
// diagonalization up to `dense_limit` states, Lanczos stepping beyond.
std::vector<FockState> propagate_exact(const FockState& psi0, const FockHamiltonian& h,
                                       const std::vector<double>& times, std::size_t dense_limit = 4000);

struct CoherentEmbedding {
    Eigen::VectorXcd amps;     // n = 0..n_max
    double truncation_error;  // 1 - sum |amp|^2
};

CoherentEmbedding coherent_in_fock(cplx gamma, int n_max);

// Spinor times a product of per-mode Fock amplitude vectors (each n_max + 1 long).
FockState product_state(const FockSpec& spec, const Spinor& spin, const std::vector<Eigen::VectorXcd>& modes);

// Embeds a D2 state in the truncated basis (not renormalized).
FockState d2_to_fock(const FockSpec& spec, const D2State& state);

SpinDensity fock_spin_density(const FockSpec& spec, const FockState& psi);

double fock_expectation(const FockHamiltonian& op, const FockState& psi);

TraceSample fock_sample(const FockSpec& spec, const FockHamiltonian& h, const FockState& psi, double t);

enum class Fig1Case { ground, even_superposition, odd_superposition, mixed };

Fig1Case parse_fig1_case(std::string_view name);
std::string_view to_string(Fig1Case c);
inline constexpr Fig1Case kFig1Cases[] = {Fig1Case::ground, Fig1Case::even_superposition,
                                          Fig1Case::odd_superposition, Fig1Case::mixed};

struct Fig1Params {
    double omega0 = 4.0;
    double omega1 = 1.0;
    double coupling = 8.0;
    int n_max = 400;
    // Number of Fock levels entering each superposition.
    int levels = 4;
    double t_end = 20.0;
    double dt = 0.05;

    void validate() const;
};

// Initial oscillator amplitudes for one case: |0>, equal-weight even
// levels 0, 2, ..., odd levels 1, 3, ..., or levels 0..levels-1.
Eigen::VectorXcd fig1_bath_state(Fig1Case c, const Fig1Params& params);

// Spin +x with the case's oscillator state, single-mode exact propagation.
std::vector<TraceSample> fig1_experiment(Fig1Case c, const Fig1Params& params);

}  // namespace spinmeas
