#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spinmeas/config.hpp"
#include "spinmeas/experiments.hpp"
#include "spinmeas/modulation.hpp"
#include "spinmeas/observables.hpp"
#include "spinmeas/propagator.hpp"

namespace spinmeas {

inline constexpr const char* kTraceSchema = "bloch_trace v1";
inline constexpr const char* kTraceHeader = "t,a_x,a_y,a_z,norm,energy,S_lin,S_O,M";

// 17 significant digits: round-trips every double.
std::string format_double(double x);

// Writes `value` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& value);

// Tags go into the leading comment line as key=value pairs.
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceSample>& samples,
                     const std::map<std::string, std::string>& tags);

struct TraceTable {
    std::map<std::string, std::string> tags;
    std::vector<TraceSample> samples;
};

TraceTable read_trace_csv(const std::filesystem::path& path);

void write_events_json(const std::filesystem::path& path, const std::vector<BasisEvent>& events);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h, bool converged_only, double threshold);
void write_protocol_csv(const std::filesystem::path& path, const Protocol& protocol, double dt);

// Normalized outcome density on [-1 + eps, 1 - eps], for histogram overlays.
void write_density_csv(const std::filesystem::path& path, double epsilon, int points = 401);

// SPINMEAS_OUTPUT_ROOT if set, else ./runs.
std::filesystem::path default_output_root();

struct RunFiles {
    std::string label;
    std::uint64_t seed = 0;
    std::string trace;
    std::string events;
    std::string state;
};

struct WrittenCampaign {
    Json summary;
    std::vector<RunFiles> runs;
    std::vector<std::string> files;  // other outputs, relative to the run directory
    bool numerical_failure = false;
};

WrittenCampaign write_ensemble(const std::filesystem::path& dir, const CampaignSpec& spec, const EnsembleSummary& s);
WrittenCampaign write_repeat(const std::filesystem::path& dir, const CampaignSpec& spec, const RepeatReport& r);
WrittenCampaign write_sweep(const std::filesystem::path& dir, const CampaignSpec& spec, const SweepReport& r);
WrittenCampaign write_fig1(const std::filesystem::path& dir, const CampaignSpec& spec, const Fig1Report& r);

// Known departures from the model as usually stated, relevant to this campaign.
std::vector<std::string> deviations(const CampaignSpec& spec);

// Full replay record. `created` is the only field allowed to differ between replays.
Json manifest_json(const ResolvedCampaign& campaign, const WrittenCampaign& written, int threads,
                   const std::string& created);

}  // namespace spinmeas
