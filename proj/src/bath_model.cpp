#include "spinmeas/bath_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace spinmeas {

double SpectralDensityParams::operator()(double omega) const {
    if (omega <= 0.0) {
        return 0.0;
    }
    return 2.0 * std::numbers::pi * alpha * std::pow(omega_c, 1.0 - s) * std::pow(omega, s) *
           std::exp(-omega / omega_c);
}

void SpectralDensityParams::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("bath.alpha must be > 0");
    if (!(s > 0.0)) throw ConfigError("bath.s must be > 0");
    if (!(omega_c > 0.0)) throw ConfigError("bath.omega_c must be > 0");
}

void BathSpec::validate() const {
    if (omegas.size() != gs.size()) {
        throw DimensionError("BathSpec: omegas and gs differ in length");
    }
    if (omegas.size() == 0) {
        throw DimensionError("BathSpec: no modes");
    }
    for (Eigen::Index n = 0; n < omegas.size(); ++n) {
        if (!(omegas(n) > 0.0) || (n > 0 && !(omegas(n) > omegas(n - 1)))) {
            throw ConfigError("BathSpec: frequencies must be positive and strictly ascending");
        }
        if (!(gs(n) >= 0.0)) {
            throw ConfigError("BathSpec: couplings must be nonnegative");
        }
    }
}

void ThermalParams::validate() const {
    if (!(kT >= 0.0)) throw ConfigError("thermal.kT must be >= 0");
    if (!(reference_omega > 0.0)) throw ConfigError("thermal.reference_omega must be > 0");
}

BathSpec discretize(const SpectralDensityParams& params, int n_modes, double omega_max) {
    params.validate();
    if (n_modes < 1) throw ConfigError("bath.n_modes must be >= 1");
    if (!(omega_max > 0.0)) throw ConfigError("bath.omega_max must be > 0");

    const double dw = omega_max / n_modes;
    BathSpec bath;
    bath.omegas.resize(n_modes);
    bath.gs.resize(n_modes);
    for (int n = 0; n < n_modes; ++n) {
        const double w = (n + 1) * dw;
        bath.omegas(n) = w;
        bath.gs(n) = std::sqrt(params(w) * dw / std::numbers::pi);
    }
    return bath;
}

double mean_occupation(double omega, double kT) {
    if (kT <= 0.0) {
        return 0.0;
    }
    return 1.0 / std::expm1(omega / kT);
}

MultimodeConfig sample_initial_bath(const BathSpec& bath, const ThermalParams& thermal, Rng& rng) {
    thermal.validate();
    const Eigen::Index n_modes = bath.size();
    MultimodeConfig gammas = MultimodeConfig::Zero(n_modes);
    if (thermal.kT == 0.0) {
        return gammas;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index n = 0; n < n_modes; ++n) {
        double variance = 0.0;
        switch (thermal.law) {
            case ThermalLaw::gaussian:
                variance = 0.5 * thermal.kT / thermal.reference_omega;
                break;
            case ThermalLaw::mode_weighted:
                variance = 0.5 * mean_occupation(bath.omegas(n), thermal.kT);
                break;
        }
        const double sigma = std::sqrt(variance);
        const double re = sigma * normal(rng);
        const double im = sigma * normal(rng);
        gammas(n) = cplx(re, im);
    }
    return gammas;
}

}  // namespace spinmeas
