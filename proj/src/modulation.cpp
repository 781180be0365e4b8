#include "spinmeas/modulation.hpp"

#include <algorithm>
#include <cmath>

#include "spinmeas/types.hpp"

namespace spinmeas {
namespace {

double sig(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// sig(-6) ~ 2.5e-3: the profile is treated as switched off beyond this.
constexpr double kSettleWidths = 6.0;

}  // namespace

double Modulation::operator()(double t) const {
    switch (kind) {
        case Kind::constant:
            return amplitude;
        case Kind::box:
            return amplitude * sig((t - t_on) / rise) * sig((t_off - t) / rise);
        case Kind::sigmoid_off:
            return amplitude * sig((t_mid - t) / width);
        case Kind::sigmoid_on:
            return amplitude * sig((t - t_mid) / width);
        case Kind::table: {
            if (t <= times.front()) return values.front();
            if (t >= times.back()) return values.back();
            const auto it = std::upper_bound(times.begin(), times.end(), t);
            const auto i = static_cast<std::size_t>(it - times.begin());
            const double w = (t - times[i - 1]) / (times[i] - times[i - 1]);
            return (1.0 - w) * values[i - 1] + w * values[i];
        }
    }
    return 0.0;
}

double Modulation::settle_time() const {
    switch (kind) {
        case Kind::constant:
            return 0.0;
        case Kind::box:
            return t_off + kSettleWidths * rise;
        case Kind::sigmoid_off:
        case Kind::sigmoid_on:
            return t_mid + kSettleWidths * width;
        case Kind::table:
            return times.back();
    }
    return 0.0;
}

void Modulation::validate(const std::string& where) const {
    auto fail = [&](const std::string& what) { throw ConfigError(where + ": " + what); };
    if (!std::isfinite(amplitude)) fail("amplitude must be finite");
    switch (kind) {
        case Kind::constant:
            if (amplitude < 0.0) fail("value must be >= 0");
            break;
        case Kind::box:
            if (amplitude < 0.0) fail("amplitude must be >= 0");
            if (!(rise > 0.0)) fail("rise must be > 0");
            if (!(t_off > t_on)) fail("t_off must exceed t_on");
            break;
        case Kind::sigmoid_off:
        case Kind::sigmoid_on:
            if (amplitude < 0.0) fail("amplitude must be >= 0");
            if (!(width > 0.0)) fail("width must be > 0");
            break;
        case Kind::table:
            if (times.size() < 2 || times.size() != values.size()) {
                fail("table needs >= 2 (time, value) pairs of equal length");
            }
            for (std::size_t i = 0; i < times.size(); ++i) {
                if (values[i] < 0.0) fail("table values must be >= 0");
                if (i > 0 && !(times[i] > times[i - 1])) fail("table times must be strictly ascending");
            }
            break;
    }
}

Modulation Modulation::constant(double value) {
    Modulation m;
    m.kind = Kind::constant;
    m.amplitude = value;
    return m;
}

Modulation Modulation::box(double t_on, double t_off, double rise, double amplitude) {
    Modulation m;
    m.kind = Kind::box;
    m.t_on = t_on;
    m.t_off = t_off;
    m.rise = rise;
    m.amplitude = amplitude;
    return m;
}

Modulation Modulation::sigmoid_off(double t_mid, double width, double amplitude) {
    Modulation m;
    m.kind = Kind::sigmoid_off;
    m.t_mid = t_mid;
    m.width = width;
    m.amplitude = amplitude;
    return m;
}

Modulation Modulation::sigmoid_on(double t_mid, double width, double amplitude) {
    Modulation m;
    m.kind = Kind::sigmoid_on;
    m.t_mid = t_mid;
    m.width = width;
    m.amplitude = amplitude;
    return m;
}

Modulation Modulation::table(std::vector<double> times, std::vector<double> values) {
    Modulation m;
    m.kind = Kind::table;
    m.times = std::move(times);
    m.values = std::move(values);
    return m;
}

std::string to_string(Modulation::Kind kind) {
    switch (kind) {
        case Modulation::Kind::constant: return "constant";
        case Modulation::Kind::box: return "box";
        case Modulation::Kind::sigmoid_off: return "sigmoid_off";
        case Modulation::Kind::sigmoid_on: return "sigmoid_on";
        case Modulation::Kind::table: return "table";
    }
    return "?";
}

Modulation::Kind parse_modulation_kind(const std::string& name) {
    if (name == "constant") return Modulation::Kind::constant;
    if (name == "box") return Modulation::Kind::box;
    if (name == "sigmoid_off") return Modulation::Kind::sigmoid_off;
    if (name == "sigmoid_on") return Modulation::Kind::sigmoid_on;
    if (name == "table") return Modulation::Kind::table;
    throw ConfigError("unknown modulation kind '" + name + "'");
}

std::string to_string(HamiltonianVariant variant) {
    switch (variant) {
        case HamiltonianVariant::sigma_x_selfenergy: return "sigma_x_selfenergy";
        case HamiltonianVariant::sigma_z_selfenergy: return "sigma_z_selfenergy";
    }
    return "?";
}

HamiltonianVariant parse_hamiltonian_variant(const std::string& name) {
    if (name == "sigma_x_selfenergy") return HamiltonianVariant::sigma_x_selfenergy;
    if (name == "sigma_z_selfenergy") return HamiltonianVariant::sigma_z_selfenergy;
    throw ConfigError("unknown hamiltonian variant '" + name + "'");
}

double Protocol::post_measurement_start() const {
    switch (f_OE.kind) {
        case Modulation::Kind::box:
        case Modulation::Kind::sigmoid_off:
            return f_OE.settle_time();
        case Modulation::Kind::table:
            return f_OE.values.back() == 0.0 ? f_OE.settle_time() : 0.0;
        default:
            return 0.0;
    }
}

void Protocol::validate() const {
    f_O.validate("protocol.f_O");
    f_OE.validate("protocol.f_OE");
    if (!std::isfinite(omega0)) throw ConfigError("protocol.omega0 must be finite");
    if (!(t_end > 0.0)) throw ConfigError("protocol.t_end must be > 0");
}

}  // namespace spinmeas
