#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "spinmeas/types.hpp"

namespace spinmeas {

// J(w) = 2 pi alpha w_c^(1-s) w^s exp(-w/w_c)
struct SpectralDensityParams {
    double alpha = 0.3;
    double s = 0.25;
    double omega_c = 2.0;

    double operator()(double omega) const;
    void validate() const;
};

struct BathSpec {
    Eigen::VectorXd omegas;
    Eigen::VectorXd gs;

    Eigen::Index size() const { return omegas.size(); }
    void validate() const;
};

enum class ThermalLaw {
    gaussian,       // isotropic, per-component variance kT / (2 w_ref)
    mode_weighted,  // per-mode thermal P-function, <|g_n|^2> = nbar(w_n)
};

struct ThermalParams {
    double kT = 0.2;
    ThermalLaw law = ThermalLaw::mode_weighted;
    // Representative frequency for the gaussian law.
    double reference_omega = 1.0;

    void validate() const;
};

// Per-trajectory random stream.
using Rng = std::mt19937_64;

// Linear grid w_n = n dw, dw = omega_max / N, g_n = sqrt(J(w_n) dw / pi).
BathSpec discretize(const SpectralDensityParams& params, int n_modes, double omega_max);

// Bose occupation 1 / (exp(w/kT) - 1); zero at kT = 0.
double mean_occupation(double omega, double kT);

MultimodeConfig sample_initial_bath(const BathSpec& bath, const ThermalParams& thermal, Rng& rng);

}  // namespace spinmeas
