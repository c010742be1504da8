#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dragplan/control.hpp"
#include "dragplan/model.hpp"
#include "dragplan/planner.hpp"
#include "dragplan/rollout.hpp"
#include "dragplan/spline.hpp"
#include "dragplan/vehicle.hpp"

namespace dragplan {

/// Every tunable of the pipeline. Loaded from a flat `key = value` file.
struct Settings {
  VehicleParams vehicle;
  Se3Gains gains;
  TrackingCostConfig cost;
  SplineSettings spline;
  TrainConfig train;
  PgdConfig pgd;
  PerturbationSettings data;
};

using KeyValues = std::map<std::string, std::string>;

inline constexpr const char* kConfigSchema = "dragplan.config/1";

/// `key = value` per line, `#` starts a comment. Errors carry `origin:line`.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<config>");
KeyValues load_key_values(const std::string& path);

/// Defaults, then `file`, then `overrides`. Unknown keys and malformed values
/// raise ConfigError; the result is validated.
Settings resolve_settings(const KeyValues& file = {}, const KeyValues& overrides = {});

/// One `key = value` line per setting, sorted, in round-trip precision.
std::string canonical_config(const Settings& settings);
std::uint64_t config_hash(const Settings& settings);
std::string hash_hex(std::uint64_t hash);

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace dragplan
