// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--list] [--only name]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "spinmeas/config.hpp"
#include "spinmeas/experiments.hpp"
#include "spinmeas/oracle_check.hpp"

namespace fs = std::filesystem;
using namespace spinmeas;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> check;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

CampaignSpec preset(const std::string& name) {
    return campaign_from_json(read_json_file(fs::path(SPINMEAS_CONFIG_DIR) / "desk" / (name + ".json")));
}

std::vector<const BlochTrace*> traces_of(const std::vector<RunResult>& runs) {
    std::vector<const BlochTrace*> out;
    for (const auto& r : runs) {
        if (r.ok) out.push_back(&r.trace);
    }
    return out;
}

double norm_error(const std::vector<const BlochTrace*>& traces) {
    double worst = 0.0;
    for (const auto* t : traces) {
        for (const auto& s : t->samples) worst = std::max(worst, std::abs(s.norm - 1.0));
    }
    return worst;
}

long failures(const std::vector<RunResult>& runs) {
    long n = 0;
    for (const auto& r : runs) n += r.ok ? 0 : 1;
    return n;
}

Outcome algebra_oracle() {
    const auto start = std::chrono::steady_clock::now();
    OracleCheckOptions o;
    o.algebra_cases = 1000;
    o.max_amplitude = 3.0;
    const SuiteResult r = check_coherent_algebra(o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {r.passed && secs < 10.0,
            std::to_string(r.cases) + " cases, max rel dev " + fmt("%.2e", r.max_deviation) + " (< 1e-8), " +
                fmt("%.1f", secs) + " s (< 10 s)"};
}

Outcome norm_conservation() {
    // Largest desk shapes: N = 32 with the ramped protocol, M = 6, t = 100.
    CampaignSpec s = preset("B");
    s.n_runs = 4;
    s.multiplicity = 6;
    s.n_modes = 32;
    const EnsembleSummary e = run_family_B(s);
    CampaignSpec a = preset("A");
    a.n_runs = 2;
    a.multiplicity = 6;
    a.n_modes = 32;
    a.protocol.t_end = 100.0;
    const EnsembleSummary c = run_family_A(a);
    const long failed = failures(e.runs) + failures(c.runs);
    const double worst = std::max(norm_error(traces_of(e.runs)), norm_error(traces_of(c.runs)));
    return {failed == 0 && worst < 1e-6,
            "6 runs N=32 M=6 t=100, max |norm^2 - 1| " + fmt("%.2e", worst) + " (< 1e-6), failed " +
                std::to_string(failed)};
}

Outcome energy_conservation() {
    CampaignSpec s = preset("A");
    s.n_runs = 3;
    s.n_modes = 16;
    s.multiplicity = 4;
    s.protocol.t_end = 50.0;
    const EnsembleSummary e = run_family_A(s);
    double worst = 0.0;
    for (const auto* t : traces_of(e.runs)) {
        const double e0 = t->samples.front().energy;
        for (const auto& x : t->samples) worst = std::max(worst, std::abs(x.energy - e0) / std::abs(e0));
    }
    const long failed = failures(e.runs);
    return {failed == 0 && worst < 1e-4,
            "3 runs N=16 M=4 t<=50, max relative drift " + fmt("%.2e", worst) + " (< 1e-4)"};
}

Outcome parity_superselection() {
    const BathSpec bath = discretize({}, 16, 4.0);
    Protocol p;
    p.f_O = Modulation::constant(1.0);
    p.f_OE = Modulation::constant(1.0);
    p.t_end = 50.0;
    const D2State init = make_product_initial(SpinPreparation::plus_x, Eigen::VectorXcd::Zero(16), 5);
    const BlochTrace tr = run_trajectory(init, bath, p, {}, sample_grid(0.0, p.t_end, 0.25));
    double variational = 0.0;
    for (const auto& x : tr.samples) variational = std::max(variational, std::abs(x.a.z));
    const SuiteResult oracle = check_parity({});
    const bool ok = variational < 1e-6 && oracle.passed;
    return {ok, "vacuum N=16 M=5 max|a_z| " + fmt("%.2e", variational) + "; exact " + oracle.detail};
}

Outcome sigma_z_conservation() {
    CampaignSpec s = preset("C");
    s.n_runs = 1;
    const RepeatReport r = run_family_C(s);
    const long failed = failures(r.redundant);
    return {failed == 0 && !r.redundant.empty() && r.redundant_max_drift < 1e-8,
            std::to_string(r.redundant.size()) + " redundant runs, max |a_z(t) - a_z(0)| " +
                fmt("%.2e", r.redundant_max_drift) + " (< 1e-8)"};
}

Outcome propagator_vs_oracle() {
    const SuiteResult r = check_propagator({});
    return {r.passed, "max |delta a_z| " + fmt("%.2e", r.max_deviation) + " (< 0.02), " + r.detail};
}

Outcome entropy_identities() {
    CampaignSpec s = preset("B");
    s.n_runs = 4;
    s.n_modes = 16;
    const EnsembleSummary e = run_family_B(s);
    const SuiteResult oracle = check_entropy_identities({});
    double worst = 0.0;
    long samples = 0;
    for (const auto* t : traces_of(e.runs)) {
        for (const auto& x : t->samples) {
            const double mutual = x.s_spin + x.s_env;
            worst = std::max({worst, std::abs(x.s_spin - x.s_env), std::abs(mutual - 2.0 * x.s_spin)});
            ++samples;
        }
    }
    worst = std::max(worst, oracle.max_deviation);
    return {failures(e.runs) == 0 && worst < 1e-8,
            std::to_string(samples + oracle.cases) + " samples, max gap " + fmt("%.2e", worst) + " (< 1e-8)"};
}

Outcome repeatability() {
    const RepeatReport r = run_family_C(preset("C"));
    return {r.accepted >= 20 && r.agreement_rate >= 0.9,
            std::to_string(r.agreeing) + "/" + std::to_string(r.accepted) + " accepted pairs agree (" +
                fmt("%.3f", r.agreement_rate) + ", need >= 0.9 over >= 20)"};
}

Outcome superposition_sweep() {
    const CampaignSpec s = preset("D");
    SweepReport r;
    try {
        r = run_family_D(s);
    } catch (const NumericalError& e) {
        return {false, e.what()};
    }
    const double tol = s.analysis.convergence_std;
    bool ok = true;
    for (const auto& pt : r.points) ok = ok && pt.run.ok;
    if (!ok) return {false, "a sweep point failed to integrate"};
    const auto at = [&](double phi) -> const AsymptoteRecord* {
        for (const auto& pt : r.points) {
            if (std::abs(pt.phi - phi) < 1e-12) return &pt.run.asymptote;
        }
        return nullptr;
    };
    const AsymptoteRecord* p0 = at(0.0);
    const AsymptoteRecord* p90 = at(std::numbers::pi / 2.0);
    const AsymptoteRecord* p45 = at(std::numbers::pi / 4.0);
    if (!p0 || !p90 || !p45) return {false, "sweep grid lacks 0, pi/4 or pi/2"};
    const double za = r.pilots[static_cast<std::size_t>(r.pilot_a)].asymptote.a_z_inf;
    const double zb = r.pilots[static_cast<std::size_t>(r.pilot_b)].asymptote.a_z_inf;
    const double d0 = std::abs(p0->a_z_inf - za);
    const double d90 = std::abs(p90->a_z_inf - zb);
    ok = d0 <= tol && d90 <= tol && std::abs(p45->a_z_inf) < 0.15 && p45->a_norm2_inf < 0.1;
    bool monotone = true;
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& lo = r.points[i - 1].run.asymptote;
        const auto& hi = r.points[i].run.asymptote;
        if (hi.a_z_inf > lo.a_z_inf + lo.window_std + hi.window_std) monotone = false;
    }
    ok = ok && monotone;
    std::ostringstream os;
    os << "pilots " << fmt("%+.3f", za) << "/" << fmt("%+.3f", zb) << ", endpoint dev " << fmt("%.3f", d0) << "/"
       << fmt("%.3f", d90) << " (<= " << tol << "), pi/4 a_z " << fmt("%+.3f", p45->a_z_inf) << " |a|^2 "
       << fmt("%.3f", p45->a_norm2_inf) << ", monotone " << (monotone ? "yes" : "no");
    return {ok, os.str()};
}

Outcome bimodality() {
    const CampaignSpec s = preset("B");
    const EnsembleSummary e = run_family_B(s);
    const long included = static_cast<long>(e.runs.size()) - e.failed;
    const long below = included - e.localized;
    std::ostringstream os;
    os << s.n_runs << " runs N=" << s.n_modes << ": " << e.localized << " with |a_z_inf| > "
       << s.analysis.localization_threshold << ", " << below << " at or below, failed " << e.failed;
    return {s.n_runs == 50 && s.n_modes == 32 && e.localized > below, os.str()};
}

Outcome sampler_moments() {
    BathSpec b;
    b.omegas.resize(5);
    b.omegas << 0.1, 0.3, 0.6, 1.0, 2.0;
    b.gs = Eigen::VectorXd::Ones(5);
    ThermalParams t;
    t.kT = 0.5;
    t.law = ThermalLaw::mode_weighted;
    Rng rng(777);
    const int draws = 10000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < draws; ++i) sum += sample_initial_bath(b, t, rng).cwiseAbs2();
    double worst = 0.0;
    for (int n = 0; n < 5; ++n) {
        const double want = mean_occupation(b.omegas(n), t.kT);
        worst = std::max(worst, std::abs(sum(n) / draws - want) / want);
    }
    return {worst < 0.03, "10000 draws at 5 frequencies, max relative error " + fmt("%.4f", worst) + " (< 0.03)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("spinmeas_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cli = SPINMEAS_CLI;
    const fs::path cfg = fs::path(SPINMEAS_CONFIG_DIR) / "desk" / "A.json";
    const std::string first = (root / "first").string();
    const std::string second = (root / "second").string();
    const std::string run1 = "\"" + cli + "\" run \"" + cfg.string() +
                             "\" n_runs=3 bath.n_modes=8 protocol.t_end=20 -q -o \"" + first + "\"";
    const std::string run2 =
        "\"" + cli + "\" run --replay \"" + first + "/manifest.json\" -q -o \"" + second + "\"";
    const int rc1 = std::system(run1.c_str());
    const int rc2 = std::system(run2.c_str());
    const std::string a = slurp(root / "first" / "summary.json");
    const std::string b = slurp(root / "second" / "summary.json");
    const bool ok = rc1 == 0 && rc2 == 0 && !a.empty() && a == b;
    fs::remove_all(root);
    return {ok, "replayed summary.json " + std::string(a == b && !a.empty() ? "identical" : "differs") + " (" +
                    std::to_string(a.size()) + " bytes)"};
}

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all{
        {"algebra_oracle", algebra_oracle},
        {"norm_conservation", norm_conservation},
        {"energy_conservation", energy_conservation},
        {"parity_superselection", parity_superselection},
        {"sigma_z_conservation", sigma_z_conservation},
        {"propagator_vs_oracle", propagator_vs_oracle},
        {"entropy_identities", entropy_identities},
        {"repeatability", repeatability},
        {"superposition_sweep", superposition_sweep},
        {"bimodality", bimodality},
        {"sampler_moments", sampler_moments},
        {"determinism", determinism},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--list") {
            for (const auto& c : criteria()) std::printf("%s\n", c.name.c_str());
            return 0;
        }
        if (arg == "--only" && i + 1 < argc) {
            only.emplace_back(argv[++i]);
            continue;
        }
        std::fprintf(stderr, "usage: acceptance [--list] [--only name]...\n");
        return 2;
    }
    bool all_passed = true;
    int ran = 0;
    for (const auto& c : criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %-22s %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        all_passed = all_passed && o.passed;
    }
    if (ran == 0) {
        std::fprintf(stderr, "no criterion matched\n");
        return 2;
    }
    return all_passed ? 0 : 1;
}
