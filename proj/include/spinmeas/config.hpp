#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinmeas/bath_model.hpp"
#include "spinmeas/d2_state.hpp"
#include "spinmeas/experiments.hpp"
#include "spinmeas/modulation.hpp"

namespace spinmeas {

using Json = nlohmann::ordered_json;

// Built-in defaults for a family; a config file only lists departures from these.
CampaignSpec default_campaign(Family family);

// Complete, resolved form: every field present.
Json to_json(const CampaignSpec& spec);

// Strict parse on top of the family defaults. Unknown keys, wrong types and
// out-of-range values raise ConfigError naming the dotted path.
CampaignSpec campaign_from_json(const Json& j);

Json to_json(const Modulation& m);
Modulation modulation_from_json(const Json& j, const std::string& path);

Json to_json(const BathSpec& bath);
BathSpec bath_from_json(const Json& j);

Json to_json(const D2State& state);
D2State d2_state_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);

struct OverrideRecord {
    std::string key;  // dotted path, e.g. bath.n_modes
    Json value;
    Json previous;  // resolved value before the override (null if absent)
};

struct ResolvedCampaign {
    CampaignSpec spec;
    Json config;  // to_json(spec)
    std::vector<OverrideRecord> overrides;
};

// Applies key=value overrides to the raw config, then resolves it. Values are
// read as JSON where possible, otherwise as strings.
ResolvedCampaign resolve_campaign(const Json& raw, const std::vector<std::string>& overrides = {});

}  // namespace spinmeas
