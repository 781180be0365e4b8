#include "spinmeas/output.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef SPINMEAS_VERSION
#define SPINMEAS_VERSION "unknown"
#endif

namespace spinmeas {
namespace fs = std::filesystem;
namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string tag_line(const char* schema, const std::map<std::string, std::string>& tags) {
    std::string line = std::string("# ") + schema;
    for (const auto& [k, v] : tags) line += " " + k + "=" + v;
    return line;
}

Json asymptote_json(const RunResult& r) {
    Json j{{"label", r.label}, {"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
        j["a_z_inf"] = r.asymptote.a_z_inf;
        j["window_std"] = r.asymptote.window_std;
        j["a_norm2_inf"] = r.asymptote.a_norm2_inf;
        j["converged"] = r.asymptote.converged;
        j["accepted_steps"] = r.trace.stats.accepted;
        j["rejected_steps"] = r.trace.stats.rejected;
        j["final_multiplicity"] = r.trace.final_state.multiplicity();
    } else {
        j["error"] = r.error;
    }
    return j;
}

void write_asymptotes_csv(const fs::path& path, const std::vector<std::pair<const RunResult*, std::string>>& rows) {
    auto out = open_out(path);
    out << "# asymptotes v1\n";
    out << "label,index,seed,role,ok,converged,a_z_inf,window_std,a_norm2_inf,t_lo,t_hi\n";
    for (const auto& [r, role] : rows) {
        const auto& a = r->asymptote;
        out << r->label << ',' << r->index << ',' << r->seed << ',' << role << ',' << (r->ok ? 1 : 0) << ','
            << (a.converged ? 1 : 0) << ',' << format_double(a.a_z_inf) << ',' << format_double(a.window_std) << ','
            << format_double(a.a_norm2_inf) << ',' << format_double(a.t_lo) << ',' << format_double(a.t_hi) << '\n';
    }
}

void write_initial_ensemble_csv(const fs::path& path, const BathSpec& bath, const std::vector<const RunResult*>& runs) {
    auto out = open_out(path);
    out << "# initial_ensemble v1\n";
    out << "label,mode,omega,re,im\n";
    for (const RunResult* r : runs) {
        if (r->initial.multiplicity() == 0) continue;
        for (Eigen::Index n = 0; n < r->initial.modes(); ++n) {
            const cplx g = r->initial.gammas(0, n);
            out << r->label << ',' << n << ',' << format_double(bath.omegas(n)) << ',' << format_double(g.real())
                << ',' << format_double(g.imag()) << '\n';
        }
    }
}

// Trace, events and state snapshot of one run.
RunFiles write_run(const fs::path& dir, const RunResult& r, const std::string& role) {
    RunFiles f;
    f.label = r.label;
    f.seed = r.seed;
    f.trace = "traces/" + r.label + ".csv";
    f.events = "events/" + r.label + ".json";
    f.state = "states/" + r.label + ".json";
    write_trace_csv(dir / f.trace, r.trace.samples,
                    {{"label", r.label}, {"role", role}, {"seed", std::to_string(r.seed)}, {"oracle", "false"}});
    write_events_json(dir / f.events, r.trace.events);
    Json state{{"label", r.label}, {"seed", r.seed}, {"initial", to_json(r.initial)}};
    if (r.ok) state["final"] = to_json(r.trace.final_state);
    write_json(dir / f.state, state);
    return f;
}

Json thresholds_json(const CampaignSpec& spec) {
    return Json{{"localization_threshold", spec.analysis.localization_threshold},
                {"convergence_std", spec.analysis.convergence_std},
                {"window_frac", spec.analysis.window_frac}};
}

Json histogram_json(const Histogram& h) {
    return Json{{"edges", h.edges}, {"counts", h.counts}};
}

}  // namespace

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_json(const fs::path& path, const Json& value) {
    auto out = open_out(path);
    out << value.dump(2) << '\n';
}

void write_trace_csv(const fs::path& path, const std::vector<TraceSample>& samples,
                     const std::map<std::string, std::string>& tags) {
    auto out = open_out(path);
    out << tag_line(kTraceSchema, tags) << '\n' << kTraceHeader << '\n';
    for (const auto& s : samples) {
        out << format_double(s.t) << ',' << format_double(s.a.x) << ',' << format_double(s.a.y) << ','
            << format_double(s.a.z) << ',' << format_double(s.norm) << ',' << format_double(s.energy) << ','
            << format_double(s.s_lin) << ',' << format_double(s.s_spin) << ',' << s.multiplicity << '\n';
    }
}

TraceTable read_trace_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    TraceTable table;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string word;
            while (ss >> word) {
                const auto eq = word.find('=');
                if (eq != std::string::npos) table.tags[word.substr(0, eq)] = word.substr(eq + 1);
            }
            continue;
        }
        if (!header) {
            if (line != kTraceHeader) throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
            header = true;
            continue;
        }
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        TraceSample s;
        s.t = std::stod(cells[0]);
        s.a = {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])};
        s.norm = std::stod(cells[4]);
        s.energy = std::stod(cells[5]);
        s.s_lin = std::stod(cells[6]);
        s.s_spin = std::stod(cells[7]);
        s.s_env = s.s_spin;
        s.multiplicity = std::stol(cells[8]);
        table.samples.push_back(s);
    }
    if (!header) throw std::runtime_error(path.string() + ": missing header row");
    return table;
}

void write_events_json(const fs::path& path, const std::vector<BasisEvent>& events) {
    Json arr = Json::array();
    for (const auto& e : events) {
        arr.push_back(Json{{"t", e.t},
                           {"kind", e.kind},
                           {"multiplicity_before", e.multiplicity_before},
                           {"multiplicity_after", e.multiplicity_after},
                           {"value", e.value},
                           {"detail", e.detail}});
    }
    write_json(path, arr);
}

void write_histogram_csv(const fs::path& path, const Histogram& h, bool converged_only, double threshold) {
    auto out = open_out(path);
    out << "# histogram v1 converged_only=" << (converged_only ? "true" : "false")
        << " localization_threshold=" << format_double(threshold) << '\n';
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        out << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    }
}

void write_protocol_csv(const fs::path& path, const Protocol& protocol, double dt) {
    auto out = open_out(path);
    out << "# protocol v1 variant=" << to_string(protocol.variant) << '\n';
    out << "t,f_O,f_OE\n";
    for (const double t : sample_grid(0.0, protocol.t_end, dt)) {
        out << format_double(t) << ',' << format_double(protocol.f_O(t)) << ',' << format_double(protocol.f_OE(t))
            << '\n';
    }
}

void write_density_csv(const fs::path& path, double epsilon, int points) {
    auto out = open_out(path);
    const double norm = outcome_density_norm(epsilon);
    out << "# outcome_density v1 epsilon=" << format_double(epsilon) << '\n';
    out << "a,density\n";
    const double lo = -1.0 + epsilon;
    const double hi = 1.0 - epsilon;
    for (int i = 0; i < points; ++i) {
        const double a = lo + (hi - lo) * i / (points - 1);
        out << format_double(a) << ',' << format_double(outcome_density_unnormalized(a) / norm) << '\n';
    }
}

fs::path default_output_root() {
    if (const char* env = std::getenv("SPINMEAS_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

WrittenCampaign write_ensemble(const fs::path& dir, const CampaignSpec& spec, const EnsembleSummary& s) {
    WrittenCampaign w;
    std::vector<std::pair<const RunResult*, std::string>> rows;
    std::vector<const RunResult*> all;
    Json runs = Json::array();
    for (const auto& r : s.runs) {
        w.runs.push_back(write_run(dir, r, "single"));
        rows.emplace_back(&r, "single");
        all.push_back(&r);
        runs.push_back(asymptote_json(r));
        if (!r.ok) w.numerical_failure = true;
    }
    write_asymptotes_csv(dir / "asymptotes.csv", rows);
    write_initial_ensemble_csv(dir / "initial_ensemble.csv", spec.bath(), all);
    write_protocol_csv(dir / "protocol.csv", spec.protocol, spec.sample_dt);
    write_density_csv(dir / "density.csv", spec.analysis.density_epsilon);
    w.files = {"asymptotes.csv", "initial_ensemble.csv", "protocol.csv", "density.csv"};
    if (s.histogram) {
        write_histogram_csv(dir / "histogram.csv", *s.histogram, s.histogram_converged_only,
                            spec.analysis.localization_threshold);
        w.files.push_back("histogram.csv");
    }
    const long included = s.histogram ? s.histogram->total() : 0;
    w.summary = Json{{"format", "summary v1"},
                     {"family", to_string(spec.family)},
                     {"n_runs", spec.n_runs},
                     {"thresholds", thresholds_json(spec)},
                     {"failed", s.failed},
                     {"converged", s.converged},
                     {"histogram_converged_only", s.histogram_converged_only},
                     {"included", included},
                     {"localized", s.localized},
                     {"localized_fraction", s.localized_fraction},
                     {"max_norm_error", s.max_norm_error},
                     {"max_entropy_gap", s.max_entropy_gap},
                     {"histogram", s.histogram ? histogram_json(*s.histogram) : Json()},
                     {"runs", runs}};
    return w;
}

WrittenCampaign write_repeat(const fs::path& dir, const CampaignSpec& spec, const RepeatReport& r) {
    WrittenCampaign w;
    std::vector<std::pair<const RunResult*, std::string>> rows;
    std::vector<const RunResult*> firsts;
    std::vector<AsymptoteRecord> first_records;
    Json redundant = Json::array();
    for (const auto& run : r.redundant) {
        w.runs.push_back(write_run(dir, run, "redundant"));
        rows.emplace_back(&run, "redundant");
        Json j = asymptote_json(run);
        if (run.ok && !run.trace.samples.empty()) {
            double drift = 0.0;
            for (const auto& s : run.trace.samples) {
                drift = std::max(drift, std::abs(s.a.z - run.trace.samples.front().a.z));
            }
            j["a_z_drift"] = drift;
        } else {
            w.numerical_failure = true;
        }
        redundant.push_back(j);
    }
    Json pairs = Json::array();
    for (const auto& p : r.pairs) {
        w.runs.push_back(write_run(dir, p.first, "first"));
        rows.emplace_back(&p.first, "first");
        firsts.push_back(&p.first);
        if (!p.first.ok) w.numerical_failure = true;
        if (p.first.ok) first_records.push_back(p.first.asymptote);
        Json j{{"index", p.first.index}, {"first", asymptote_json(p.first)}, {"accepted", p.accepted},
               {"agree", p.agree}, {"note", p.note}};
        if (!p.second.label.empty()) {
            w.runs.push_back(write_run(dir, p.second, "second"));
            rows.emplace_back(&p.second, "second");
            j["second"] = asymptote_json(p.second);
        }
        pairs.push_back(j);
    }
    write_asymptotes_csv(dir / "asymptotes.csv", rows);
    write_initial_ensemble_csv(dir / "initial_ensemble.csv", spec.bath(), firsts);
    write_protocol_csv(dir / "protocol.csv", spec.protocol, spec.sample_dt);
    write_protocol_csv(dir / "protocol_second.csv", second_measurement_protocol(spec.protocol), spec.sample_dt);
    w.files = {"asymptotes.csv", "initial_ensemble.csv", "protocol.csv", "protocol_second.csv", "repeat.json"};
    if (!first_records.empty()) {
        const Histogram h = histogram_asymptotes(first_records, spec.analysis.histogram_bins, true);
        write_histogram_csv(dir / "histogram.csv", h, false, spec.analysis.localization_threshold);
        w.files.push_back("histogram.csv");
    }
    const Json report{{"redundant", redundant}, {"redundant_max_drift", r.redundant_max_drift}, {"pairs", pairs},
                      {"accepted", r.accepted}, {"agreeing", r.agreeing}, {"agreement_rate", r.agreement_rate}};
    write_json(dir / "repeat.json", report);
    w.summary = Json{{"format", "summary v1"},
                     {"family", to_string(spec.family)},
                     {"n_runs", spec.n_runs},
                     {"thresholds", thresholds_json(spec)},
                     {"redundant_max_drift", r.redundant_max_drift},
                     {"accepted", r.accepted},
                     {"agreeing", r.agreeing},
                     {"agreement_rate", r.agreement_rate},
                     {"report", report}};
    return w;
}

WrittenCampaign write_sweep(const fs::path& dir, const CampaignSpec& spec, const SweepReport& r) {
    WrittenCampaign w;
    std::vector<std::pair<const RunResult*, std::string>> rows;
    std::vector<const RunResult*> pilots;
    std::vector<AsymptoteRecord> pilot_records;
    Json pilot_json = Json::array();
    for (const auto& p : r.pilots) {
        w.runs.push_back(write_run(dir, p, "pilot"));
        rows.emplace_back(&p, "pilot");
        pilots.push_back(&p);
        pilot_json.push_back(asymptote_json(p));
        if (p.ok) pilot_records.push_back(p.asymptote);
    }
    Json points = Json::array();
    for (const auto& pt : r.points) {
        w.runs.push_back(write_run(dir, pt.run, "sweep"));
        rows.emplace_back(&pt.run, "sweep");
        if (!pt.run.ok) w.numerical_failure = true;
        Json j = asymptote_json(pt.run);
        j["phi"] = pt.phi;
        j["predicted"] = predicted_polarization(pt.phi);
        points.push_back(j);
    }
    write_asymptotes_csv(dir / "asymptotes.csv", rows);
    write_initial_ensemble_csv(dir / "initial_ensemble.csv", spec.bath(), pilots);
    write_protocol_csv(dir / "protocol.csv", spec.protocol, spec.sample_dt);
    write_density_csv(dir / "density.csv", spec.analysis.density_epsilon);
    w.files = {"asymptotes.csv", "initial_ensemble.csv", "protocol.csv", "density.csv", "sweep.json"};
    if (!pilot_records.empty()) {
        const Histogram h = histogram_asymptotes(pilot_records, spec.analysis.histogram_bins, true);
        write_histogram_csv(dir / "histogram.csv", h, false, spec.analysis.localization_threshold);
        w.files.push_back("histogram.csv");
    }
    Json fit;
    if (r.fit) {
        fit = Json{{"sse", r.fit->sse},
                   {"rms", r.fit->rms},
                   {"max_abs", r.fit->max_abs},
                   {"predicted", r.fit->predicted},
                   {"density_epsilon", r.fit->density_epsilon},
                   {"density_norm", r.fit->density_norm}};
    }
    const Json report{{"pilot_a", r.pilot_a},
                      {"pilot_b", r.pilot_b},
                      {"pilot_a_label", r.pilots.at(static_cast<std::size_t>(r.pilot_a)).label},
                      {"pilot_b_label", r.pilots.at(static_cast<std::size_t>(r.pilot_b)).label},
                      {"pilots", pilot_json},
                      {"points", points},
                      {"fit", fit}};
    write_json(dir / "sweep.json", report);
    w.summary = Json{{"format", "summary v1"},
                     {"family", to_string(spec.family)},
                     {"thresholds", thresholds_json(spec)},
                     {"sweep", report}};
    return w;
}

WrittenCampaign write_fig1(const fs::path& dir, const CampaignSpec& spec, const Fig1Report& r) {
    WrittenCampaign w;
    Json cases = Json::array();
    for (const auto& [c, samples] : r.cases) {
        const std::string label = "fig1_" + std::string(to_string(c));
        RunFiles f;
        f.label = label;
        f.trace = "traces/" + label + ".csv";
        write_trace_csv(dir / f.trace, samples, {{"label", label}, {"role", "oracle"}, {"oracle", "true"}});
        w.runs.push_back(f);
        double max_az = 0.0;
        double max_norm = 0.0;
        for (const auto& s : samples) {
            max_az = std::max(max_az, std::abs(s.a.z));
            max_norm = std::max(max_norm, std::abs(s.norm - 1.0));
        }
        cases.push_back(Json{{"case", to_string(c)}, {"label", label}, {"max_abs_a_z", max_az},
                             {"max_norm_error", max_norm}});
    }
    w.summary = Json{{"format", "summary v1"},
                     {"family", to_string(spec.family)},
                     {"omega0", spec.fig1.omega0},
                     {"omega1", spec.fig1.omega1},
                     {"coupling", spec.fig1.coupling},
                     {"n_max", spec.fig1.n_max},
                     {"cases", cases}};
    return w;
}

std::vector<std::string> deviations(const CampaignSpec& spec) {
    std::vector<std::string> out{
        "spin entropy S_O is the von Neumann entropy of the reduced spin density",
        "zero-point energy of the bath is dropped from the Hamiltonian",
    };
    if (spec.integrator.solver == MetricSolver::spectral) {
        out.emplace_back("metric solve uses a smooth spectral filter lambda/(lambda^2+cut^2) instead of a hard cutoff");
    } else {
        out.emplace_back("metric solve uses a Cholesky factorization of the metric shifted by metric_reg*max(diag)");
    }
    if (spec.approximate) {
        out.emplace_back("modulation timings, t_end and omega_max of this preset are approximate, chosen for desk scale");
    }
    if (spec.family == Family::C) {
        out.emplace_back("second measurement: self-energy switched off for the whole run, coupling protocol unchanged");
    }
    if (spec.family == Family::D) {
        out.emplace_back("sweep endpoint tolerance is analysis.convergence_std");
    }
    if (spec.family == Family::fig1) {
        out.emplace_back("oscillator truncation n_max = " + std::to_string(spec.fig1.n_max) +
                         " so the displaced superpositions stay inside the basis");
    }
    return out;
}

Json manifest_json(const ResolvedCampaign& campaign, const WrittenCampaign& written, int threads,
                   const std::string& created) {
    Json overrides = Json::array();
    for (const auto& o : campaign.overrides) {
        overrides.push_back(Json{{"key", o.key}, {"value", o.value}, {"previous", o.previous}});
    }
    Json runs = Json::array();
    Json seeds = Json::array();
    for (const auto& r : written.runs) {
        Json j{{"label", r.label}, {"seed", r.seed}, {"trace", r.trace}};
        if (!r.events.empty()) j["events"] = r.events;
        if (!r.state.empty()) j["state"] = r.state;
        runs.push_back(j);
        seeds.push_back(r.seed);
    }
    return Json{{"format", "manifest v1"},
                {"version", SPINMEAS_VERSION},
                {"created", created},
                {"threads", threads},
                {"config", campaign.config},
                {"overrides", overrides},
                {"approximate", campaign.spec.approximate},
                {"thresholds", thresholds_json(campaign.spec)},
                {"bath_spec", to_json(campaign.spec.bath())},
                {"seeds", seeds},
                {"runs", runs},
                {"outputs", Json{{"summary", "summary.json"}, {"files", written.files}}},
                {"deviations", deviations(campaign.spec)}};
}

}  // namespace spinmeas
