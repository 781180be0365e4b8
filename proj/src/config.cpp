#include "spinmeas/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

namespace spinmeas {
namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + why);
}

// Reads the members of one JSON object, remembering which keys were consumed.
class Fields {
  public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    const Json* find(const std::string& key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    void read(const std::string& key, double& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) fail(join(path_, key), "expected a number");
            out = v->get<double>();
        }
    }

    void read(const std::string& key, int& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_integer()) fail(join(path_, key), "expected an integer");
            const auto x = v->get<long long>();
            if (x < INT32_MIN || x > INT32_MAX) fail(join(path_, key), "integer out of range");
            out = static_cast<int>(x);
        }
    }

    void read(const std::string& key, long& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_integer()) fail(join(path_, key), "expected an integer");
            out = v->get<long>();
        }
    }

    void read(const std::string& key, std::uint64_t& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_unsigned()) fail(join(path_, key), "expected a nonnegative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void read(const std::string& key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) fail(join(path_, key), "expected true or false");
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) fail(join(path_, key), "expected a string");
            out = v->get<std::string>();
        }
    }

    void read(const std::string& key, std::vector<double>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) fail(join(path_, key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) fail(join(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
                out.push_back((*v)[i].get<double>());
            }
        }
    }

    // Enumerations given by name.
    template <class Parse, class T>
    void read_enum(const std::string& key, T& out, Parse parse) {
        std::string name;
        if (const Json* v = find(key)) {
            if (!v->is_string()) fail(join(path_, key), "expected a string");
            name = v->get<std::string>();
            try {
                out = parse(name);
            } catch (const ConfigError& e) {
                fail(join(path_, key), e.what());
            }
        }
    }

    std::string child(const std::string& key) const { return join(path_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) fail(join(path_, it.key()), "unknown key");
        }
    }

  private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

std::string_view to_string(ThermalLaw law) {
    return law == ThermalLaw::gaussian ? "gaussian" : "mode_weighted";
}

ThermalLaw parse_thermal_law(const std::string& name) {
    if (name == "gaussian") return ThermalLaw::gaussian;
    if (name == "mode_weighted") return ThermalLaw::mode_weighted;
    throw ConfigError("unknown thermal law '" + name + "'");
}

Json cplx_json(cplx z) {
    return Json::array({z.real(), z.imag()});
}

cplx cplx_from(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        fail(path, "expected [re, im]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

void read_protocol(Fields& f, Protocol& p) {
    const std::string path = f.child("protocol");
    const Json* j = f.find("protocol");
    if (!j) return;
    Fields g(*j, path);
    if (const Json* m = g.find("f_O")) p.f_O = modulation_from_json(*m, join(path, "f_O"));
    if (const Json* m = g.find("f_OE")) p.f_OE = modulation_from_json(*m, join(path, "f_OE"));
    g.read_enum("variant", p.variant, parse_hamiltonian_variant);
    g.read("omega0", p.omega0);
    g.read("t_end", p.t_end);
    g.finish();
}

void read_integrator(Fields& f, IntegratorConfig& c) {
    const Json* j = f.find("integrator");
    if (!j) return;
    Fields g(*j, f.child("integrator"));
    g.read("rel_tol", c.rel_tol);
    g.read("abs_tol", c.abs_tol);
    g.read("metric_reg", c.metric_reg);
    g.read_enum("solver", c.solver, parse_metric_solver);
    g.read("adaptive", c.adaptive);
    g.read("parity_projection", c.parity_projection);
    g.read("spawn_threshold", c.spawn_threshold);
    g.read("apoptosis_overlap", c.apoptosis_overlap);
    g.read("max_multiplicity", c.max_multiplicity);
    g.read("h_init", c.h_init);
    g.read("h_min", c.h_min);
    g.read("h_max", c.h_max);
    g.read("max_steps", c.max_steps);
    g.finish();
}

Json integrator_json(const IntegratorConfig& c) {
    return Json{{"rel_tol", c.rel_tol},
                {"abs_tol", c.abs_tol},
                {"metric_reg", c.metric_reg},
                {"solver", to_string(c.solver)},
                {"adaptive", c.adaptive},
                {"parity_projection", c.parity_projection},
                {"spawn_threshold", c.spawn_threshold},
                {"apoptosis_overlap", c.apoptosis_overlap},
                {"max_multiplicity", c.max_multiplicity},
                {"h_init", c.h_init},
                {"h_min", c.h_min},
                {"h_max", c.h_max},
                {"max_steps", c.max_steps}};
}

// Walks a dotted path, creating objects on the way. Returns the parent and leaf key.
Json& locate(Json& root, const std::string& dotted, std::string& leaf) {
    Json* node = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + dotted + "': empty path component");
        if (dot == std::string::npos) {
            leaf = part;
            return *node;
        }
        Json& next = (*node)[part];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) throw ConfigError("override '" + dotted + "': '" + part + "' is not an object");
        node = &next;
        start = dot + 1;
    }
}

const Json* lookup(const Json& root, const std::string& dotted) {
    const Json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object()) return nullptr;
        const auto it = node->find(part);
        if (it == node->end()) return nullptr;
        node = &*it;
    }
    return node;
}

}  // namespace

CampaignSpec default_campaign(Family family) {
    CampaignSpec s;
    s.family = family;
    s.integrator.solver = MetricSolver::shifted_cholesky;
    switch (family) {
        case Family::A:
            s.description = "constant modulations";
            s.protocol.f_O = Modulation::constant(1.0);
            s.protocol.f_OE = Modulation::constant(1.0);
            s.protocol.t_end = 50.0;
            s.omega_max = 8.0;
            break;
        case Family::B:
        case Family::C:
        case Family::D:
            // Coupling ramps up first, the self-energy is released slowly
            // while it acts, then the coupling is ramped off.
            s.description = "ramped coupling with slow self-energy release";
            s.approximate = true;
            s.protocol.f_O = Modulation::sigmoid_off(35.0, 5.0);
            s.protocol.f_OE = Modulation::box(15.0, 60.0, 5.0);
            s.protocol.t_end = 100.0;
            s.omega_max = 1.0;
            if (family == Family::B) s.n_runs = 50;
            if (family == Family::C) s.description = "repeated measurement, second run without self-energy";
            if (family == Family::D) s.description = "superposition sweep between two opposite pilot outcomes";
            break;
        case Family::fig1:
            s.description = "single-mode exact propagation, four oscillator starts";
            s.n_runs = 4;
            break;
    }
    return s;
}

Json to_json(const Modulation& m) {
    using K = Modulation::Kind;
    Json j{{"kind", to_string(m.kind)}};
    switch (m.kind) {
        case K::constant:
            j["value"] = m.amplitude;
            break;
        case K::box:
            j["t_on"] = m.t_on;
            j["t_off"] = m.t_off;
            j["rise"] = m.rise;
            j["amplitude"] = m.amplitude;
            break;
        case K::sigmoid_off:
        case K::sigmoid_on:
            j["t_mid"] = m.t_mid;
            j["width"] = m.width;
            j["amplitude"] = m.amplitude;
            break;
        case K::table:
            j["times"] = m.times;
            j["values"] = m.values;
            break;
    }
    return j;
}

Modulation modulation_from_json(const Json& j, const std::string& path) {
    using K = Modulation::Kind;
    if (j.is_number()) return Modulation::constant(j.get<double>());
    Fields f(j, path);
    std::string kind;
    f.read("kind", kind);
    if (kind.empty()) fail(join(path, "kind"), "missing");
    Modulation m;
    try {
        m.kind = parse_modulation_kind(kind);
    } catch (const ConfigError& e) {
        fail(join(path, "kind"), e.what());
    }
    switch (m.kind) {
        case K::constant:
            f.read("value", m.amplitude);
            break;
        case K::box:
            f.read("t_on", m.t_on);
            f.read("t_off", m.t_off);
            f.read("rise", m.rise);
            f.read("amplitude", m.amplitude);
            break;
        case K::sigmoid_off:
        case K::sigmoid_on:
            f.read("t_mid", m.t_mid);
            f.read("width", m.width);
            f.read("amplitude", m.amplitude);
            break;
        case K::table:
            f.read("times", m.times);
            f.read("values", m.values);
            break;
    }
    f.finish();
    m.validate(path);
    return m;
}

Json to_json(const CampaignSpec& s) {
    Json spins = Json::array();
    for (const auto sp : s.repeat.redundant_spins) spins.push_back(to_string(sp));
    return Json{
        {"family", to_string(s.family)},
        {"description", s.description},
        {"approximate", s.approximate},
        {"n_runs", s.n_runs},
        {"base_seed", s.base_seed},
        {"bath",
         {{"alpha", s.spectral.alpha},
          {"s", s.spectral.s},
          {"omega_c", s.spectral.omega_c},
          {"n_modes", s.n_modes},
          {"omega_max", s.omega_max}}},
        {"thermal",
         {{"kT", s.thermal.kT}, {"law", to_string(s.thermal.law)}, {"reference_omega", s.thermal.reference_omega}}},
        {"state", {{"multiplicity", s.multiplicity}, {"displacement", s.displacement}, {"spin", to_string(s.spin)}}},
        {"protocol",
         {{"variant", to_string(s.protocol.variant)},
          {"omega0", s.protocol.omega0},
          {"t_end", s.protocol.t_end},
          {"f_O", to_json(s.protocol.f_O)},
          {"f_OE", to_json(s.protocol.f_OE)}}},
        {"integrator", integrator_json(s.integrator)},
        {"sampling", {{"dt", s.sample_dt}}},
        {"analysis",
         {{"window_frac", s.analysis.window_frac},
          {"convergence_std", s.analysis.convergence_std},
          {"histogram_bins", s.analysis.histogram_bins},
          {"localization_threshold", s.analysis.localization_threshold},
          {"density_epsilon", s.analysis.density_epsilon}}},
        {"repeat", {{"redundant_spins", spins}, {"min_bloch_length", s.repeat.min_bloch_length}}},
        {"sweep",
         {{"phis", s.sweep.phis},
          {"pilot_budget", s.sweep.pilot_budget},
          {"pilot_threshold", s.sweep.pilot_threshold}}},
        {"fig1",
         {{"omega0", s.fig1.omega0},
          {"omega1", s.fig1.omega1},
          {"coupling", s.fig1.coupling},
          {"n_max", s.fig1.n_max},
          {"levels", s.fig1.levels},
          {"t_end", s.fig1.t_end},
          {"dt", s.fig1.dt}}},
    };
}

CampaignSpec campaign_from_json(const Json& j) {
    Fields root(j, "");
    Family family = Family::B;
    root.read_enum("family", family, parse_family);
    CampaignSpec s = default_campaign(family);
    root.read("description", s.description);
    root.read("approximate", s.approximate);
    root.read("n_runs", s.n_runs);
    root.read("base_seed", s.base_seed);
    if (const Json* b = root.find("bath")) {
        Fields f(*b, "bath");
        f.read("alpha", s.spectral.alpha);
        f.read("s", s.spectral.s);
        f.read("omega_c", s.spectral.omega_c);
        f.read("n_modes", s.n_modes);
        f.read("omega_max", s.omega_max);
        f.finish();
    }
    if (const Json* t = root.find("thermal")) {
        Fields f(*t, "thermal");
        f.read("kT", s.thermal.kT);
        f.read_enum("law", s.thermal.law, parse_thermal_law);
        f.read("reference_omega", s.thermal.reference_omega);
        f.finish();
    }
    if (const Json* st = root.find("state")) {
        Fields f(*st, "state");
        f.read("multiplicity", s.multiplicity);
        f.read("displacement", s.displacement);
        f.read_enum("spin", s.spin, [](const std::string& n) { return parse_spin_preparation(n); });
        f.finish();
    }
    read_protocol(root, s.protocol);
    read_integrator(root, s.integrator);
    if (const Json* sm = root.find("sampling")) {
        Fields f(*sm, "sampling");
        f.read("dt", s.sample_dt);
        f.finish();
    }
    if (const Json* a = root.find("analysis")) {
        Fields f(*a, "analysis");
        f.read("window_frac", s.analysis.window_frac);
        f.read("convergence_std", s.analysis.convergence_std);
        f.read("histogram_bins", s.analysis.histogram_bins);
        f.read("localization_threshold", s.analysis.localization_threshold);
        f.read("density_epsilon", s.analysis.density_epsilon);
        f.finish();
    }
    if (const Json* r = root.find("repeat")) {
        Fields f(*r, "repeat");
        if (const Json* spins = f.find("redundant_spins")) {
            if (!spins->is_array()) fail("repeat.redundant_spins", "expected an array of spin names");
            s.repeat.redundant_spins.clear();
            for (std::size_t i = 0; i < spins->size(); ++i) {
                const std::string where = "repeat.redundant_spins[" + std::to_string(i) + "]";
                if (!(*spins)[i].is_string()) fail(where, "expected a string");
                try {
                    s.repeat.redundant_spins.push_back(parse_spin_preparation((*spins)[i].get<std::string>()));
                } catch (const ConfigError& e) {
                    fail(where, e.what());
                }
            }
        }
        f.read("min_bloch_length", s.repeat.min_bloch_length);
        f.finish();
    }
    if (const Json* w = root.find("sweep")) {
        Fields f(*w, "sweep");
        f.read("phis", s.sweep.phis);
        f.read("pilot_budget", s.sweep.pilot_budget);
        f.read("pilot_threshold", s.sweep.pilot_threshold);
        f.finish();
    }
    if (const Json* g = root.find("fig1")) {
        Fields f(*g, "fig1");
        f.read("omega0", s.fig1.omega0);
        f.read("omega1", s.fig1.omega1);
        f.read("coupling", s.fig1.coupling);
        f.read("n_max", s.fig1.n_max);
        f.read("levels", s.fig1.levels);
        f.read("t_end", s.fig1.t_end);
        f.read("dt", s.fig1.dt);
        f.finish();
    }
    root.finish();
    s.validate();
    return s;
}

Json to_json(const BathSpec& bath) {
    return Json{{"omegas", std::vector<double>(bath.omegas.begin(), bath.omegas.end())},
                {"gs", std::vector<double>(bath.gs.begin(), bath.gs.end())}};
}

BathSpec bath_from_json(const Json& j) {
    Fields f(j, "bath_spec");
    std::vector<double> w, g;
    f.read("omegas", w);
    f.read("gs", g);
    f.finish();
    if (w.size() != g.size()) fail("bath_spec", "omegas and gs differ in length");
    BathSpec b;
    b.omegas = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    b.gs = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    b.validate();
    return b;
}

Json to_json(const D2State& state) {
    Json amps = Json::array();
    Json gammas = Json::array();
    for (Eigen::Index m = 0; m < state.multiplicity(); ++m) {
        amps.push_back(Json::array({cplx_json(state.amps(m, 0)), cplx_json(state.amps(m, 1))}));
        Json row = Json::array();
        for (Eigen::Index n = 0; n < state.modes(); ++n) row.push_back(cplx_json(state.gammas(m, n)));
        gammas.push_back(std::move(row));
    }
    return Json{{"time", state.time}, {"amps", amps}, {"gammas", gammas}};
}

D2State d2_state_from_json(const Json& j) {
    Fields f(j, "state");
    D2State s;
    f.read("time", s.time);
    const Json* amps = f.find("amps");
    const Json* gammas = f.find("gammas");
    f.finish();
    if (!amps || !amps->is_array()) fail("state.amps", "expected an array");
    if (!gammas || !gammas->is_array() || gammas->size() != amps->size()) {
        fail("state.gammas", "expected one row per configuration");
    }
    const auto m_count = static_cast<Eigen::Index>(amps->size());
    const auto n_count = m_count > 0 ? static_cast<Eigen::Index>((*gammas)[0].size()) : 0;
    s.amps.resize(m_count, 2);
    s.gammas.resize(m_count, n_count);
    for (Eigen::Index m = 0; m < m_count; ++m) {
        const Json& a = (*amps)[static_cast<std::size_t>(m)];
        const Json& g = (*gammas)[static_cast<std::size_t>(m)];
        const std::string pa = "state.amps[" + std::to_string(m) + "]";
        const std::string pg = "state.gammas[" + std::to_string(m) + "]";
        if (!a.is_array() || a.size() != 2) fail(pa, "expected [up, down]");
        if (!g.is_array() || static_cast<Eigen::Index>(g.size()) != n_count) fail(pg, "row length mismatch");
        s.amps(m, 0) = cplx_from(a[0], pa);
        s.amps(m, 1) = cplx_from(a[1], pa);
        for (Eigen::Index n = 0; n < n_count; ++n) s.gammas(m, n) = cplx_from(g[static_cast<std::size_t>(n)], pg);
    }
    s.validate();
    return s;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open");
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": malformed JSON: " + e.what());
    }
}

ResolvedCampaign resolve_campaign(const Json& raw, const std::vector<std::string>& overrides) {
    ResolvedCampaign out;
    Json edited = raw.is_null() ? Json::object() : raw;
    Json before;
    if (!overrides.empty()) before = to_json(campaign_from_json(edited));
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "': expected key=value");
        OverrideRecord rec;
        rec.key = kv.substr(0, eq);
        const std::string text = kv.substr(eq + 1);
        rec.value = Json::parse(text, nullptr, false);
        if (rec.value.is_discarded()) rec.value = text;
        if (const Json* prev = lookup(before, rec.key)) rec.previous = *prev;
        std::string leaf;
        locate(edited, rec.key, leaf)[leaf] = rec.value;
        out.overrides.push_back(std::move(rec));
    }
    out.spec = campaign_from_json(edited);
    out.config = to_json(out.spec);
    return out;
}

}  // namespace spinmeas
