#pragma once

#include <string>
#include <vector>

namespace spinmeas {

// Time profile multiplying one term of the Hamiltonian.
//
//   constant     amplitude
//   box          amplitude * sig((t - t_on)/rise) * sig((t_off - t)/rise)
//   sigmoid_off  amplitude * sig((t_mid - t)/width)
//   sigmoid_on   amplitude * sig((t - t_mid)/width)
//   table        linear interpolation of (times, values), clamped at both ends
//
// with sig(x) = 1 / (1 + exp(-x)).
struct Modulation {
    enum class Kind { constant, box, sigmoid_off, sigmoid_on, table };

    Kind kind = Kind::constant;
    double amplitude = 1.0;
    double t_on = 0.0;
    double t_off = 0.0;
    double rise = 1.0;
    double t_mid = 0.0;
    double width = 1.0;
    std::vector<double> times;
    std::vector<double> values;

    double operator()(double t) const;

    // Last time at which the profile still changes appreciably; 0 for constants.
    double settle_time() const;

    void validate(const std::string& where) const;

    static Modulation constant(double value);
    static Modulation box(double t_on, double t_off, double rise, double amplitude = 1.0);
    static Modulation sigmoid_off(double t_mid, double width, double amplitude = 1.0);
    static Modulation sigmoid_on(double t_mid, double width, double amplitude = 1.0);
    static Modulation table(std::vector<double> times, std::vector<double> values);
};

std::string to_string(Modulation::Kind kind);
Modulation::Kind parse_modulation_kind(const std::string& name);

enum class HamiltonianVariant {
    sigma_x_selfenergy,  // (w0/2) f_O sigma_x + f_OE sigma_z sum g (a^dag + a) + sum w a^dag a
    sigma_z_selfenergy,  // same with the self-energy along sigma_z; commutes with sigma_z
};

std::string to_string(HamiltonianVariant variant);
HamiltonianVariant parse_hamiltonian_variant(const std::string& name);

struct Protocol {
    Modulation f_O = Modulation::constant(1.0);
    Modulation f_OE = Modulation::constant(1.0);
    HamiltonianVariant variant = HamiltonianVariant::sigma_x_selfenergy;
    double omega0 = -1.0;  // signed spin splitting
    double t_end = 50.0;

    // Instant after which the coupling has been switched off, or 0 if it never is.
    double post_measurement_start() const;

    void validate() const;
};

}  // namespace spinmeas
