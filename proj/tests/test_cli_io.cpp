#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spinmeas/config.hpp"
#include "spinmeas/oracle_check.hpp"
#include "spinmeas/output.hpp"

using namespace spinmeas;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spinmeas_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(SPINMEAS_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string error_of(const Json& j, const std::vector<std::string>& overrides = {}) {
    try {
        resolve_campaign(j, overrides);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

Json tiny_campaign() {
    return Json::parse(R"({
      "family": "B", "n_runs": 2, "base_seed": 5,
      "bath": {"n_modes": 3, "omega_max": 1.0},
      "state": {"multiplicity": 2},
      "protocol": {"t_end": 8.0,
                   "f_O": {"kind": "sigmoid_off", "t_mid": 3.0, "width": 0.5},
                   "f_OE": {"kind": "box", "t_on": 1.0, "t_off": 4.0, "rise": 0.5}},
      "sampling": {"dt": 0.5}
    })");
}

}  // namespace

TEST_CASE("minimal config resolves to the family defaults") {
    const ResolvedCampaign r = resolve_campaign(Json{{"family", "B"}});
    const CampaignSpec d = default_campaign(Family::B);
    CHECK(r.config == to_json(d));
    CHECK(r.spec.n_runs == d.n_runs);
    CHECK(r.config["bath"]["n_modes"] == 16);
    CHECK(r.config["protocol"]["f_OE"]["kind"] == "box");
}

TEST_CASE("config errors name the offending field") {
    CHECK(error_of(Json::parse(R"({"thermal": {"kT": -1}})")).find("thermal.kT") != std::string::npos);
    CHECK(error_of(Json::parse(R"({"bath": {"alhpa": 0.3}})")).find("bath.alhpa: unknown key") != std::string::npos);
    CHECK(error_of(Json::parse(R"({"n_runs": "ten"})")).find("n_runs: expected an integer") != std::string::npos);
    CHECK(error_of(Json::parse(R"({"protocol": {"f_O": {"kind": "box", "t_on": 5, "t_off": 1}}})"))
              .find("protocol.f_O") != std::string::npos);
    CHECK(error_of(Json::parse(R"({"state": {"spin": "up"}})")).find("state.spin") != std::string::npos);
    CHECK(error_of(Json::parse(R"({"family": "Q"})")).find("family") != std::string::npos);
    CHECK(error_of(Json::array()).find("expected an object") != std::string::npos);
    CHECK(error_of(Json::object(), {"n_runs"}).find("key=value") != std::string::npos);
    CHECK(error_of(Json::object(), {"bath.nmodes=3"}).find("bath.nmodes") != std::string::npos);
}

TEST_CASE("overrides are applied and their provenance recorded") {
    const ResolvedCampaign r = resolve_campaign(Json{{"family", "B"}}, {"n_runs=5", "integrator.solver=spectral"});
    CHECK(r.spec.n_runs == 5);
    CHECK(r.spec.integrator.solver == MetricSolver::spectral);
    REQUIRE(r.overrides.size() == 2);
    CHECK(r.overrides[0].key == "n_runs");
    CHECK(r.overrides[0].value == 5);
    CHECK(r.overrides[0].previous == 50);
    CHECK(r.overrides[1].value == "spectral");
    const Json m = manifest_json(r, WrittenCampaign{}, 1, "now");
    CHECK(m["overrides"][0]["key"] == "n_runs");
    CHECK(m["config"]["n_runs"] == 5);
}

TEST_CASE("resolved config round-trips") {
    for (const Family f : {Family::A, Family::B, Family::C, Family::D, Family::fig1}) {
        const Json j = to_json(default_campaign(f));
        CHECK(to_json(campaign_from_json(j)) == j);
        CHECK(Json::parse(j.dump()) == j);
    }
    CampaignSpec s = default_campaign(Family::D);
    s.sweep.phis = {0.1, 0.2, 0.3};
    s.protocol.f_OE = Modulation::table({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
    s.repeat.redundant_spins = {SpinPreparation::plus_y};
    s.protocol.t_end = 3.0;
    CHECK(to_json(campaign_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("state and bath snapshots round-trip exactly") {
    std::srand(4);
    D2State s;
    s.amps = Eigen::MatrixX2cd::Random(3, 2);
    s.gammas = Eigen::MatrixXcd::Random(3, 5);
    s.time = 0.1 + 1e-17;
    const D2State back = d2_state_from_json(Json::parse(to_json(s).dump()));
    CHECK(back.amps == s.amps);
    CHECK(back.gammas == s.gammas);
    CHECK(back.time == s.time);
    const BathSpec b = discretize({}, 7, 3.3);
    const BathSpec bb = bath_from_json(Json::parse(to_json(b).dump()));
    CHECK(bb.omegas == b.omegas);
    CHECK(bb.gs == b.gs);
}

TEST_CASE("trace csv keeps a schema line, a header and round-trip numbers") {
    const fs::path dir = scratch("csv");
    std::vector<TraceSample> samples(3);
    for (int i = 0; i < 3; ++i) {
        samples[i].t = 0.1 * i;
        samples[i].a = {1.0 / 3.0, -2.0 / 7.0, std::sqrt(2.0) * 1e-9};
        samples[i].norm = 1.0 - 1e-13;
        samples[i].energy = -1.0 / 6.0;
        samples[i].s_lin = 1e-300;
        samples[i].s_spin = 0.123456789012345678;
        samples[i].multiplicity = 4;
    }
    write_trace_csv(dir / "t.csv", samples, {{"label", "x"}, {"oracle", "true"}});
    std::ifstream in(dir / "t.csv");
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l1.rfind("# bloch_trace v1", 0) == 0);
    CHECK(l2 == kTraceHeader);
    const TraceTable back = read_trace_csv(dir / "t.csv");
    CHECK(back.tags.at("oracle") == "true");
    REQUIRE(back.samples.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back.samples[i].t == samples[i].t);
        CHECK(back.samples[i].a.y == samples[i].a.y);
        CHECK(back.samples[i].a.z == samples[i].a.z);
        CHECK(back.samples[i].norm == samples[i].norm);
        CHECK(back.samples[i].s_lin == samples[i].s_lin);
        CHECK(back.samples[i].s_spin == samples[i].s_spin);
        CHECK(back.samples[i].multiplicity == 4);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("run directory layout read by the plotting scripts") {
    const fs::path dir = scratch("layout");
    std::ofstream(dir / "c.json") << tiny_campaign().dump();
    REQUIRE(cli("run " + (dir / "c.json").string() + " -q -o " + (dir / "out").string()) == 0);
    const fs::path out = dir / "out";
    for (const char* f : {"manifest.json", "summary.json", "histogram.csv", "asymptotes.csv", "protocol.csv",
                          "initial_ensemble.csv", "density.csv", "traces/run_0000.csv", "traces/run_0001.csv",
                          "events/run_0000.json", "states/run_0001.json"}) {
        CHECK_MESSAGE(fs::exists(out / f), f);
    }
    const Json manifest = read_json_file(out / "manifest.json");
    CHECK(manifest["runs"].size() == 2);
    CHECK(manifest["seeds"][1] == 6);
    CHECK(manifest["runs"][0]["trace"] == "traces/run_0000.csv");
    CHECK(manifest.contains("deviations"));
    CHECK(manifest["thresholds"]["localization_threshold"] == 0.7);
    const Json summary = read_json_file(out / "summary.json");
    CHECK(summary["histogram"]["counts"].size() == 20);
    CHECK(read_trace_csv(out / "traces/run_0000.csv").samples.size() == 17);
    const std::string hist = slurp(out / "histogram.csv");
    CHECK(hist.find("bin_lo,bin_hi,count") != std::string::npos);
    const std::string asym = slurp(out / "asymptotes.csv");
    CHECK(asym.find("label,index,seed,role,ok,converged,a_z_inf") != std::string::npos);
    const Json state = read_json_file(out / "states/run_0001.json");
    CHECK(d2_state_from_json(state["initial"]).multiplicity() == 2);

    // The overlay density integrates to one on its grid.
    std::ifstream dens(out / "density.csv");
    std::string line;
    std::getline(dens, line);
    std::getline(dens, line);
    double prev_a = 0.0, prev_p = 0.0, mass = 0.0;
    bool first = true;
    while (std::getline(dens, line)) {
        const auto comma = line.find(',');
        const double a = std::stod(line.substr(0, comma));
        const double p = std::stod(line.substr(comma + 1));
        if (!first) mass += 0.5 * (a - prev_a) * (p + prev_p);
        prev_a = a;
        prev_p = p;
        first = false;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(5e-3));
}

TEST_CASE("replaying a manifest reproduces summary.json byte for byte") {
    const fs::path dir = scratch("replay");
    std::ofstream(dir / "c.json") << tiny_campaign().dump();
    REQUIRE(cli("run " + (dir / "c.json").string() + " -q -j 1 -o " + (dir / "a").string()) == 0);
    REQUIRE(cli("run --replay " + (dir / "a" / "manifest.json").string() + " -q -j 2 -o " + (dir / "b").string()) == 0);
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));
    CHECK(slurp(dir / "a" / "traces/run_0001.csv") == slurp(dir / "b" / "traces/run_0001.csv"));
}

TEST_CASE("output root comes from the environment") {
    const fs::path dir = scratch("root");
    setenv("SPINMEAS_OUTPUT_ROOT", dir.c_str(), 1);
    CHECK(default_output_root() == dir);
    REQUIRE(cli("fig1 -q fig1.n_max=40 fig1.coupling=1 fig1.t_end=1") == 0);
    CHECK(fs::exists(dir / "fig1_seed1" / "traces" / "fig1_mixed.csv"));
    CHECK(read_trace_csv(dir / "fig1_seed1" / "traces" / "fig1_mixed.csv").tags.at("oracle") == "true");
    unsetenv("SPINMEAS_OUTPUT_ROOT");
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    std::ofstream(dir / "bad.json") << R"({"thermal": {"kT": -1}})";
    CHECK(cli("validate-config " + (dir / "bad.json").string()) == 2);
    std::ofstream(dir / "good.json") << R"({"family": "A"})";
    CHECK(cli("validate-config " + (dir / "good.json").string() + " n_runs=3") == 0);
    CHECK(cli("run " + (dir / "good.json").string() + " not_a_key=1") == 2);
    CHECK(cli("frobnicate") == 2);
    Json stiff = tiny_campaign();
    stiff["integrator"] = Json{{"max_steps", 2}};
    std::ofstream(dir / "stiff.json") << stiff.dump();
    CHECK(cli("run " + (dir / "stiff.json").string() + " -q -o " + (dir / "stiff").string()) == 3);
    CHECK(cli("oracle-check --cases 50") == 0);
    CHECK(cli("oracle-check --cases 50 --coupling-sign -1") == 4);
}

TEST_CASE("oracle check detects a coupling sign error") {
    OracleCheckOptions o;
    o.algebra_cases = 100;
    CHECK(check_coherent_algebra(o).passed);
    o.coupling_sign = -1.0;
    const SuiteResult bad = check_coherent_algebra(o);
    CHECK_FALSE(bad.passed);
    CHECK(bad.max_deviation > 1.0);
    const std::string table = format_report(OracleReport{{bad}});
    CHECK(table.find("FAIL") != std::string::npos);
    CHECK(table.find("max_dev") != std::string::npos);
}
