#pragma once

#include <vector>

#include "spinmeas/d2_state.hpp"
#include "spinmeas/types.hpp"

namespace spinmeas {

struct EntropyRecord {
    double linear = 0.0;       // 1 - tr(rho^2)
    double spin = 0.0;         // von Neumann entropy of the spin
    double environment = 0.0;  // von Neumann entropy of the bath, from the bath-side Gram matrix
    double mutual = 0.0;       // S_O + S_E (the total state is pure)
};

double linear_entropy(const SpinDensity& rho);

// -sum lambda ln lambda over the eigenvalues of rho, 0 ln 0 := 0.
double spin_entropy(const SpinDensity& rho);

// Entropy of the environment computed from the 2x2 Gram matrix of the
// conditional bath states |B_s> = sum_m C_ms |gamma_m>.
double environment_entropy(const D2State& state);

EntropyRecord entropies(const D2State& state);

// One sampled point of a trajectory.
struct TraceSample {
    double t = 0.0;
    BlochVector a;
    double norm = 1.0;  // <Psi|Psi>
    double energy = 0.0;
    double s_lin = 0.0;
    double s_spin = 0.0;
    double s_env = 0.0;
    long multiplicity = 0;
};

struct AsymptoteRecord {
    double a_z_inf = 0.0;
    double window_std = 0.0;
    double a_norm2_inf = 0.0;  // windowed mean of |a|^2
    bool converged = false;
    double t_lo = 0.0;
    double t_hi = 0.0;
};

struct AsymptoteOptions {
    double window_frac = 0.2;
    double convergence_std = 0.1;
    // Only samples with t >= t_from enter the window.
    double t_from = 0.0;
};

AsymptoteRecord extract_asymptote(const std::vector<TraceSample>& trace, const AsymptoteOptions& options = {});

struct Histogram {
    std::vector<double> edges;  // bins + 1, spanning [-1, 1]
    std::vector<long> counts;

    long total() const;
};

Histogram histogram_asymptotes(const std::vector<AsymptoteRecord>& records, int bins, bool include_nonconverged);

struct PhiSweepPoint {
    double phi = 0.0;
    double a_z_inf = 0.0;
};

struct PhiSweepFit {
    double sse = 0.0;       // sum of squared deviations from cos(2 phi)
    double rms = 0.0;
    double max_abs = 0.0;
    std::vector<double> predicted;
    double density_epsilon = 1e-3;
    double density_norm = 0.0;  // integral of sqrt(1 + 1/(1 - a^2)) over [-1+eps, 1-eps]
};

// a_z_inf(phi) = cos(2 phi) for incoherently mixed outcomes.
double predicted_polarization(double phi);

// Unnormalized outcome density sqrt(1 + 1/(1 - a^2)) implied by cos(2 phi).
double outcome_density_unnormalized(double a);

// Integral of the unnormalized density over [-1 + eps, 1 - eps].
double outcome_density_norm(double epsilon = 1e-3);

PhiSweepFit phi_sweep_fit(const std::vector<PhiSweepPoint>& points, double epsilon = 1e-3);

}  // namespace spinmeas
