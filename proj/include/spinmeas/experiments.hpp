#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/d2_state.hpp"
#include "spinmeas/fock_oracle.hpp"
#include "spinmeas/modulation.hpp"
#include "spinmeas/observables.hpp"
#include "spinmeas/propagator.hpp"

namespace spinmeas {

enum class Family { A, B, C, D, fig1 };

Family parse_family(std::string_view name);
std::string_view to_string(Family f);

struct AnalysisParams {
    double window_frac = 0.2;
    double convergence_std = 0.1;
    int histogram_bins = 20;
    // |a_z_inf| above this counts as a localized outcome.
    double localization_threshold = 0.7;
    double density_epsilon = 1e-3;

    void validate() const;
};

struct RepeatParams {
    // Spins prepared for the redundant sub-case (self-energy along sigma_z).
    std::vector<SpinPreparation> redundant_spins{SpinPreparation::plus_z, SpinPreparation::minus_z};
    double min_bloch_length = 1e-6;

    void validate() const;
};

struct SweepParams {
    std::vector<double> phis;  // empty: n pi / 12, n = 0..6
    int pilot_budget = 24;
    // Pilots must localize beyond this to qualify as a pair member.
    double pilot_threshold = 0.7;

    std::vector<double> resolved_phis() const;
    void validate() const;
};

struct CampaignSpec {
    Family family = Family::B;
    std::string description;
    // Preset whose timings are plausible guesses rather than known values.
    bool approximate = false;
    int n_runs = 20;
    std::uint64_t base_seed = 1;

    SpectralDensityParams spectral;
    int n_modes = 16;
    double omega_max = 8.0;
    ThermalParams thermal;

    int multiplicity = 4;
    double displacement = 0.3;
    SpinPreparation spin = SpinPreparation::plus_x;

    Protocol protocol;
    IntegratorConfig integrator;
    double sample_dt = 0.25;

    AnalysisParams analysis;
    RepeatParams repeat;
    SweepParams sweep;
    Fig1Params fig1;

    BathSpec bath() const;
    std::uint64_t seed(int run) const { return base_seed + static_cast<std::uint64_t>(run); }
    AsymptoteOptions asymptote_options() const;
    void validate() const;
};

struct RunResult {
    int index = 0;
    std::uint64_t seed = 0;
    std::string label;  // file stem, e.g. run_0007 or pair_0003_second
    D2State initial;
    BlochTrace trace;
    AsymptoteRecord asymptote;
    bool ok = false;
    std::string error;
};

struct EnsembleSummary {
    std::vector<RunResult> runs;
    std::optional<Histogram> histogram;
    bool histogram_converged_only = false;
    long converged = 0;
    long localized = 0;  // |a_z_inf| > localization threshold
    long failed = 0;
    double localized_fraction = 0.0;  // of included runs
    // Max over runs and samples.
    double max_norm_error = 0.0;
    double max_entropy_gap = 0.0;  // |S_O - S_E|
};

struct RepeatPair {
    RunResult first;
    RunResult second;
    bool accepted = false;  // first run converged and renormalizable
    bool agree = false;
    std::string note;
};

struct RepeatReport {
    std::vector<RunResult> redundant;
    double redundant_max_drift = 0.0;  // max |a_z(t) - a_z(0)|
    std::vector<RepeatPair> pairs;
    long accepted = 0;
    long agreeing = 0;
    double agreement_rate = 0.0;
};

struct SweepPoint {
    double phi = 0.0;
    RunResult run;
};

struct SweepReport {
    std::vector<RunResult> pilots;
    int pilot_a = -1;  // index into pilots, positive outcome
    int pilot_b = -1;  // negative outcome
    std::vector<SweepPoint> points;
    std::optional<PhiSweepFit> fit;
};

struct Fig1Report {
    std::vector<std::pair<Fig1Case, std::vector<TraceSample>>> cases;
};

// Completion callback for progress reporting; called from worker threads.
using ProgressFn = std::function<void(const RunResult&)>;

// Runs fn(0..n-1) on `threads` workers (0: hardware concurrency).
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

int resolve_threads(int threads);

// One trajectory from an explicit initial state; never throws NumericalError
// (the failure is recorded in the result).
RunResult run_single(const CampaignSpec& spec, const BathSpec& bath, const Protocol& protocol,
                     const D2State& initial, int index, std::uint64_t seed, std::string label);

// Product initial state of run `index`, drawn from its own stream.
D2State initial_state(const CampaignSpec& spec, const BathSpec& bath, Rng& rng);

EnsembleSummary run_family_A(const CampaignSpec& spec, int threads = 0, const ProgressFn& progress = {});
EnsembleSummary run_family_B(const CampaignSpec& spec, int threads = 0, const ProgressFn& progress = {});
RepeatReport run_family_C(const CampaignSpec& spec, int threads = 0, const ProgressFn& progress = {});
SweepReport run_family_D(const CampaignSpec& spec, int threads = 0, const ProgressFn& progress = {});
Fig1Report run_fig1(const CampaignSpec& spec, int threads = 0);

// Protocol of the second measurement in the repeated sub-case: as the first, self-energy off.
Protocol second_measurement_protocol(const Protocol& first);

// Pilot pair for the sweep: the most strongly localized positive/negative
// pilots, balanced by magnitude. Returns false if no such pair exists.
bool choose_pilot_pair(const std::vector<RunResult>& pilots, double threshold, int& a, int& b);

}  // namespace spinmeas
