// Command-line driver: campaigns, the exact single-mode cases and the oracle suite.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinmeas/config.hpp"
#include "spinmeas/experiments.hpp"
#include "spinmeas/oracle_check.hpp"
#include "spinmeas/output.hpp"

namespace fs = std::filesystem;
using namespace spinmeas;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kOracle = 4 };

struct Common {
    std::string config;
    std::string replay;
    std::vector<std::string> overrides;
    std::string output_dir;
    int threads = 0;
    bool quiet = false;
};

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

ResolvedCampaign resolve(const Common& c, std::optional<Family> forced) {
    Json raw = Json::object();
    if (!c.replay.empty()) {
        const Json manifest = read_json_file(c.replay);
        if (!manifest.contains("config")) throw ConfigError(c.replay + ": manifest has no config");
        raw = manifest["config"];
    } else if (!c.config.empty()) {
        raw = read_json_file(c.config);
    }
    if (forced) {
        if (raw.contains("family") && raw["family"] != to_string(*forced)) {
            throw ConfigError("family: this subcommand runs family " + std::string(to_string(*forced)));
        }
        raw["family"] = to_string(*forced);
    }
    return resolve_campaign(raw, c.overrides);
}

fs::path output_dir(const Common& c, const CampaignSpec& spec) {
    if (!c.output_dir.empty()) return c.output_dir;
    return default_output_root() /
           (std::string(to_string(spec.family)) + "_seed" + std::to_string(spec.base_seed));
}

int execute(const Common& c, std::optional<Family> forced) {
    const ResolvedCampaign campaign = resolve(c, forced);
    const CampaignSpec& spec = campaign.spec;
    const fs::path dir = output_dir(c, spec);
    const int threads = resolve_threads(c.threads);
    std::mutex io;
    const auto start = std::chrono::steady_clock::now();
    ProgressFn progress = [&](const RunResult& r) {
        if (c.quiet) return;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::lock_guard<std::mutex> lock(io);
        if (r.ok) {
            std::fprintf(stderr, "[%7.1fs] %-20s a_z_inf %+.4f std %.1e%s\n", secs, r.label.c_str(),
                         r.asymptote.a_z_inf, r.asymptote.window_std, r.asymptote.converged ? "" : " (not converged)");
        } else {
            std::fprintf(stderr, "[%7.1fs] %-20s FAILED: %s\n", secs, r.label.c_str(), r.error.c_str());
        }
    };
    if (!c.quiet) {
        std::fprintf(stderr, "family %s, %d thread(s), output %s\n", std::string(to_string(spec.family)).c_str(),
                     threads, dir.string().c_str());
    }

    WrittenCampaign written;
    switch (spec.family) {
        case Family::A:
            written = write_ensemble(dir, spec, run_family_A(spec, threads, progress));
            break;
        case Family::B:
            written = write_ensemble(dir, spec, run_family_B(spec, threads, progress));
            break;
        case Family::C:
            written = write_repeat(dir, spec, run_family_C(spec, threads, progress));
            break;
        case Family::D:
            written = write_sweep(dir, spec, run_family_D(spec, threads, progress));
            break;
        case Family::fig1:
            written = write_fig1(dir, spec, run_fig1(spec, threads));
            break;
    }
    write_json(dir / "summary.json", written.summary);
    write_json(dir / "manifest.json", manifest_json(campaign, written, threads, utc_now()));
    if (!c.quiet) std::fprintf(stderr, "wrote %s\n", (dir / "summary.json").string().c_str());
    return written.numerical_failure ? kNumerical : kOk;
}

void add_common(CLI::App* app, Common& c, bool takes_config) {
    if (takes_config) {
        app->add_option("config", c.config, "Campaign config (JSON)")->check(CLI::ExistingFile);
    } else {
        app->add_option("--config", c.config, "Campaign config (JSON)")->check(CLI::ExistingFile);
    }
    app->add_option("overrides", c.overrides, "Config overrides, key=value with a dotted key (bath.n_modes=32)");
    app->add_option("--output-dir,-o", c.output_dir, "Run directory (default: $SPINMEAS_OUTPUT_ROOT/<family>_seed<n>)");
    app->add_option("--threads,-j", c.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    app->add_flag("--quiet,-q", c.quiet, "No progress output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spin measurement in a finite bath: variational campaigns and exact checks"};
    app.require_subcommand(1);
    Common common;

    auto* run = app.add_subcommand("run", "Run a campaign from a config file or replay a manifest");
    add_common(run, common, true);
    run->add_option("--replay", common.replay, "Replay the config recorded in a manifest")->check(CLI::ExistingFile);

    auto* fig1 = app.add_subcommand("fig1", "Exact single-mode runs for the four oscillator starts");
    add_common(fig1, common, false);
    auto* sweep = app.add_subcommand("sweep-phi", "Superposition sweep between two opposite pilot outcomes");
    add_common(sweep, common, false);
    auto* repeat = app.add_subcommand("repeat", "Redundant and repeated measurements");
    add_common(repeat, common, false);

    auto* validate = app.add_subcommand("validate-config", "Resolve and print a config without running it");
    add_common(validate, common, true);

    OracleCheckOptions oracle;
    auto* check = app.add_subcommand("oracle-check", "Cross-check against truncated Fock calculations");
    check->add_option("--cases", oracle.algebra_cases, "Random cases for the matrix-element suite")
        ->check(CLI::PositiveNumber);
    check->add_option("--seed", oracle.seed, "Seed of the random cases");
    check->add_option("--coupling-sign", oracle.coupling_sign, "Coupling sign seen by the variational side");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        if (run->parsed()) {
            if (common.config.empty() == common.replay.empty()) {
                throw ConfigError("run: give either a config file or --replay manifest.json");
            }
            return execute(common, std::nullopt);
        }
        if (fig1->parsed()) return execute(common, Family::fig1);
        if (sweep->parsed()) return execute(common, Family::D);
        if (repeat->parsed()) return execute(common, Family::C);
        if (validate->parsed()) {
            const ResolvedCampaign rc = resolve(common, std::nullopt);
            Json out{{"config", rc.config}, {"overrides", Json::array()}};
            for (const auto& o : rc.overrides) {
                out["overrides"].push_back(Json{{"key", o.key}, {"value", o.value}, {"previous", o.previous}});
            }
            std::cout << out.dump(2) << '\n';
            return kOk;
        }
        if (check->parsed()) {
            const OracleReport report = oracle_check(oracle);
            std::cout << format_report(report);
            return report.passed() ? kOk : kOracle;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}
