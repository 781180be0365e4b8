#include "spinmeas/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace spinmeas {
namespace {

std::string padded(const char* prefix, int index, const char* suffix = "") {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%04d%s", prefix, index, suffix);
    return buf;
}

void scan_trace(const BlochTrace& trace, double& norm_err, double& entropy_gap) {
    for (const auto& s : trace.samples) {
        norm_err = std::max(norm_err, std::abs(s.norm - 1.0));
        entropy_gap = std::max(entropy_gap, std::abs(s.s_spin - s.s_env));
    }
}

EnsembleSummary summarize(const CampaignSpec& spec, std::vector<RunResult> runs, bool converged_only) {
    EnsembleSummary out;
    out.histogram_converged_only = converged_only;
    std::vector<AsymptoteRecord> records;
    long included = 0;
    for (const auto& r : runs) {
        if (!r.ok) {
            ++out.failed;
            continue;
        }
        scan_trace(r.trace, out.max_norm_error, out.max_entropy_gap);
        records.push_back(r.asymptote);
        if (r.asymptote.converged) ++out.converged;
        if (converged_only && !r.asymptote.converged) continue;
        ++included;
        if (std::abs(r.asymptote.a_z_inf) > spec.analysis.localization_threshold) ++out.localized;
    }
    out.localized_fraction = included > 0 ? static_cast<double>(out.localized) / static_cast<double>(included) : 0.0;
    if (included > 0) {
        out.histogram = histogram_asymptotes(records, spec.analysis.histogram_bins, !converged_only);
    }
    out.runs = std::move(runs);
    return out;
}

std::vector<RunResult> run_ensemble(const CampaignSpec& spec, const Protocol& protocol, int threads,
                                    const ProgressFn& progress) {
    const BathSpec bath = spec.bath();
    std::vector<RunResult> runs(static_cast<std::size_t>(spec.n_runs));
    parallel_for(spec.n_runs, threads, [&](int i) {
        Rng rng(spec.seed(i));
        const D2State init = initial_state(spec, bath, rng);
        runs[static_cast<std::size_t>(i)] = run_single(spec, bath, protocol, init, i, spec.seed(i), padded("run_", i));
        if (progress) progress(runs[static_cast<std::size_t>(i)]);
    });
    return runs;
}

}  // namespace

Family parse_family(std::string_view name) {
    if (name == "A") return Family::A;
    if (name == "B") return Family::B;
    if (name == "C") return Family::C;
    if (name == "D") return Family::D;
    if (name == "fig1") return Family::fig1;
    throw ConfigError("unknown family '" + std::string(name) + "'");
}

std::string_view to_string(Family f) {
    switch (f) {
        case Family::A: return "A";
        case Family::B: return "B";
        case Family::C: return "C";
        case Family::D: return "D";
        case Family::fig1: return "fig1";
    }
    return "?";
}

void AnalysisParams::validate() const {
    if (!(window_frac > 0.0 && window_frac <= 1.0)) throw ConfigError("analysis.window_frac must lie in (0, 1]");
    if (!(convergence_std > 0.0)) throw ConfigError("analysis.convergence_std must be > 0");
    if (histogram_bins < 1) throw ConfigError("analysis.histogram_bins must be >= 1");
    if (!(localization_threshold >= 0.0 && localization_threshold < 1.0)) {
        throw ConfigError("analysis.localization_threshold must lie in [0, 1)");
    }
    if (!(density_epsilon > 0.0 && density_epsilon < 1.0)) {
        throw ConfigError("analysis.density_epsilon must lie in (0, 1)");
    }
}

void RepeatParams::validate() const {
    if (!(min_bloch_length > 0.0)) throw ConfigError("repeat.min_bloch_length must be > 0");
}

std::vector<double> SweepParams::resolved_phis() const {
    if (!phis.empty()) return phis;
    std::vector<double> out;
    for (int n = 0; n <= 6; ++n) {
        out.push_back(n * std::numbers::pi / 12.0);
    }
    return out;
}

void SweepParams::validate() const {
    for (const double p : phis) {
        if (!(p >= 0.0 && p <= std::numbers::pi / 2 + 1e-12)) throw ConfigError("sweep.phis must lie in [0, pi/2]");
    }
    if (pilot_budget < 2) throw ConfigError("sweep.pilot_budget must be >= 2");
    if (!(pilot_threshold >= 0.0 && pilot_threshold < 1.0)) {
        throw ConfigError("sweep.pilot_threshold must lie in [0, 1)");
    }
}

BathSpec CampaignSpec::bath() const {
    return discretize(spectral, n_modes, omega_max);
}

AsymptoteOptions CampaignSpec::asymptote_options() const {
    AsymptoteOptions o;
    o.window_frac = analysis.window_frac;
    o.convergence_std = analysis.convergence_std;
    o.t_from = protocol.post_measurement_start();
    return o;
}

void CampaignSpec::validate() const {
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    spectral.validate();
    if (n_modes < 1) throw ConfigError("bath.n_modes must be >= 1");
    if (!(omega_max > 0.0)) throw ConfigError("bath.omega_max must be > 0");
    thermal.validate();
    if (multiplicity < 1) throw ConfigError("state.multiplicity must be >= 1");
    if (!(displacement > 0.0)) throw ConfigError("state.displacement must be > 0");
    protocol.validate();
    integrator.validate();
    if (!(sample_dt > 0.0)) throw ConfigError("sampling.dt must be > 0");
    analysis.validate();
    repeat.validate();
    sweep.validate();
    fig1.validate();
    if (family != Family::fig1 && protocol.post_measurement_start() >= protocol.t_end) {
        throw ConfigError("protocol.t_end must exceed the coupling switch-off time");
    }
}

int resolve_threads(int threads) {
    if (threads > 0) return threads;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int workers = std::min(resolve_threads(threads), std::max(n, 1));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

D2State initial_state(const CampaignSpec& spec, const BathSpec& bath, Rng& rng) {
    const MultimodeConfig bath0 = sample_initial_bath(bath, spec.thermal, rng);
    return make_product_initial(spec.spin, bath0, spec.multiplicity, spec.displacement);
}

RunResult run_single(const CampaignSpec& spec, const BathSpec& bath, const Protocol& protocol,
                     const D2State& initial, int index, std::uint64_t seed, std::string label) {
    RunResult r;
    r.index = index;
    r.seed = seed;
    r.label = std::move(label);
    r.initial = initial;
    try {
        Propagator prop(bath, protocol, spec.integrator);
        r.trace = prop.run(initial, sample_grid(initial.time, protocol.t_end, spec.sample_dt));
        AsymptoteOptions opts = spec.asymptote_options();
        opts.t_from = protocol.post_measurement_start();
        r.asymptote = extract_asymptote(r.trace.samples, opts);
        r.ok = true;
    } catch (const NumericalError& e) {
        r.error = e.what();
    }
    return r;
}

EnsembleSummary run_family_A(const CampaignSpec& spec, int threads, const ProgressFn& progress) {
    spec.validate();
    return summarize(spec, run_ensemble(spec, spec.protocol, threads, progress), true);
}

EnsembleSummary run_family_B(const CampaignSpec& spec, int threads, const ProgressFn& progress) {
    spec.validate();
    return summarize(spec, run_ensemble(spec, spec.protocol, threads, progress), false);
}

Protocol second_measurement_protocol(const Protocol& first) {
    Protocol p = first;
    p.f_O = Modulation::constant(0.0);
    return p;
}

RepeatReport run_family_C(const CampaignSpec& spec, int threads, const ProgressFn& progress) {
    spec.validate();
    const BathSpec bath = spec.bath();
    RepeatReport rep;

    Protocol redundant = spec.protocol;
    redundant.variant = HamiltonianVariant::sigma_z_selfenergy;
    const int n_red = static_cast<int>(spec.repeat.redundant_spins.size());
    rep.redundant.resize(static_cast<std::size_t>(n_red));
    rep.pairs.resize(static_cast<std::size_t>(spec.n_runs));
    const Protocol second = second_measurement_protocol(spec.protocol);

    parallel_for(n_red + spec.n_runs, threads, [&](int job) {
        if (job < n_red) {
            const auto k = static_cast<std::size_t>(job);
            const int index = spec.n_runs + job;
            Rng rng(spec.seed(index));
            CampaignSpec s = spec;
            s.spin = spec.repeat.redundant_spins[k];
            const D2State init = initial_state(s, bath, rng);
            rep.redundant[k] = run_single(spec, bath, redundant, init, index, spec.seed(index),
                                          std::string("redundant_") + std::string(to_string(s.spin)));
            if (progress) progress(rep.redundant[k]);
            return;
        }
        const int i = job - n_red;
        RepeatPair& pair = rep.pairs[static_cast<std::size_t>(i)];
        Rng rng(spec.seed(i));
        const D2State init = initial_state(spec, bath, rng);
        pair.first = run_single(spec, bath, spec.protocol, init, i, spec.seed(i), padded("pair_", i, "_first"));
        if (progress) progress(pair.first);
        if (!pair.first.ok) {
            pair.note = "first run failed: " + pair.first.error;
            return;
        }
        if (!pair.first.asymptote.converged) {
            pair.note = "first run did not converge";
            return;
        }
        const BlochVector a = pair.first.trace.samples.back().a;
        D2State init2;
        try {
            init2 = renormalize_spin_to_pure(a, bath, spec.thermal, rng, spec.multiplicity, spec.displacement,
                                             spec.repeat.min_bloch_length);
        } catch (const NumericalError& e) {
            pair.note = e.what();
            return;
        }
        pair.second = run_single(spec, bath, second, init2, i, spec.seed(i), padded("pair_", i, "_second"));
        if (progress) progress(pair.second);
        if (!pair.second.ok) {
            pair.note = "second run failed: " + pair.second.error;
            return;
        }
        pair.accepted = true;
        const double s1 = pair.first.asymptote.a_z_inf;
        const double s2 = pair.second.asymptote.a_z_inf;
        pair.agree = (s1 > 0.0 && s2 > 0.0) || (s1 < 0.0 && s2 < 0.0);
    });

    for (const auto& r : rep.redundant) {
        if (!r.ok || r.trace.samples.empty()) continue;
        const double z0 = r.trace.samples.front().a.z;
        for (const auto& s : r.trace.samples) {
            rep.redundant_max_drift = std::max(rep.redundant_max_drift, std::abs(s.a.z - z0));
        }
    }
    for (const auto& p : rep.pairs) {
        if (!p.accepted) continue;
        ++rep.accepted;
        if (p.agree) ++rep.agreeing;
    }
    rep.agreement_rate = rep.accepted > 0 ? static_cast<double>(rep.agreeing) / static_cast<double>(rep.accepted) : 0.0;
    return rep;
}

bool choose_pilot_pair(const std::vector<RunResult>& pilots, double threshold, int& a, int& b) {
    a = -1;
    b = -1;
    double best = 0.0;
    const int n = static_cast<int>(pilots.size());
    for (int i = 0; i < n; ++i) {
        const auto& pi = pilots[static_cast<std::size_t>(i)];
        if (!pi.ok || !pi.asymptote.converged || !(pi.asymptote.a_z_inf > threshold)) continue;
        for (int j = 0; j < n; ++j) {
            const auto& pj = pilots[static_cast<std::size_t>(j)];
            if (!pj.ok || !pj.asymptote.converged || !(pj.asymptote.a_z_inf < -threshold)) continue;
            // Balanced magnitudes make the pi/4 mixture depolarize.
            const double imbalance = std::abs(pi.asymptote.a_z_inf + pj.asymptote.a_z_inf);
            if (a < 0 || imbalance < best) {
                best = imbalance;
                a = i;
                b = j;
            }
        }
    }
    return a >= 0;
}

SweepReport run_family_D(const CampaignSpec& spec, int threads, const ProgressFn& progress) {
    spec.validate();
    const BathSpec bath = spec.bath();
    SweepReport rep;
    const int budget = spec.sweep.pilot_budget;
    rep.pilots.resize(static_cast<std::size_t>(budget));
    std::vector<D2State> inits(static_cast<std::size_t>(budget));
    parallel_for(budget, threads, [&](int i) {
        Rng rng(spec.seed(i));
        inits[static_cast<std::size_t>(i)] = initial_state(spec, bath, rng);
        rep.pilots[static_cast<std::size_t>(i)] =
            run_single(spec, bath, spec.protocol, inits[static_cast<std::size_t>(i)], i, spec.seed(i),
                       padded("pilot_", i));
        if (progress) progress(rep.pilots[static_cast<std::size_t>(i)]);
    });
    if (!choose_pilot_pair(rep.pilots, spec.sweep.pilot_threshold, rep.pilot_a, rep.pilot_b)) {
        throw NumericalError("sweep: no pilot pair with opposite localized outcomes within the budget of " +
                             std::to_string(budget));
    }
    const D2State& sa = inits[static_cast<std::size_t>(rep.pilot_a)];
    const D2State& sb = inits[static_cast<std::size_t>(rep.pilot_b)];
    const std::vector<double> phis = spec.sweep.resolved_phis();
    rep.points.resize(phis.size());
    parallel_for(static_cast<int>(phis.size()), threads, [&](int k) {
        const double phi = phis[static_cast<std::size_t>(k)];
        const D2State init = superpose(sa, sb, phi);
        rep.points[static_cast<std::size_t>(k)].phi = phi;
        rep.points[static_cast<std::size_t>(k)].run =
            run_single(spec, bath, spec.protocol, init, k, spec.seed(rep.pilot_a), padded("phi_", k));
        if (progress) progress(rep.points[static_cast<std::size_t>(k)].run);
    });
    std::vector<PhiSweepPoint> pts;
    for (const auto& p : rep.points) {
        if (p.run.ok) pts.push_back({p.phi, p.run.asymptote.a_z_inf});
    }
    if (pts.size() >= 3) {
        rep.fit = phi_sweep_fit(pts, spec.analysis.density_epsilon);
    }
    return rep;
}

Fig1Report run_fig1(const CampaignSpec& spec, int threads) {
    spec.fig1.validate();
    Fig1Report rep;
    rep.cases.resize(std::size(kFig1Cases));
    parallel_for(static_cast<int>(std::size(kFig1Cases)), threads, [&](int k) {
        const Fig1Case c = kFig1Cases[k];
        rep.cases[static_cast<std::size_t>(k)] = {c, fig1_experiment(c, spec.fig1)};
    });
    return rep;
}

}  // namespace spinmeas
