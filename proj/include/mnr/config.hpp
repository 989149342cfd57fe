#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mnr/core.hpp"

namespace mnr {

/// Configuration rejection. `field_path` points at the offending entry
/// (e.g. "scenarios[2].alpha").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field_path, const std::string& message)
        : std::runtime_error(field_path + ": " + message), field_path_(std::move(field_path)) {}
    const std::string& field_path() const { return field_path_; }

private:
    std::string field_path_;
};

struct PersistenceConfig {
    bool enabled = false;
    std::string log_path = "mnr.oplog";
    std::uint64_t compact_every_ops = 10000;
};

struct AppConfig {
    std::string listen_addr = "127.0.0.1:8080";
    std::int64_t ttl_ms = 72ll * 3600 * 1000;
    std::uint32_t dedup_window = 4096;
    std::uint64_t random_seed = 0;  // RANDOM strategy base seed
    PersistenceConfig persistence;
    std::map<std::string, ScenarioConfig> scenarios;

    const ScenarioConfig* find_scenario(const std::string& id) const {
        auto it = scenarios.find(id);
        return it == scenarios.end() ? nullptr : &it->second;
    }
};

/// Parses and validates. Throws ConfigError with a field path on any problem.
AppConfig parse_config(const nlohmann::json& doc);

/// Reads the file, applies the MNR_LISTEN_ADDR override if set.
AppConfig load_config(const std::string& path);

nlohmann::json config_to_json(const AppConfig& config);

}  // namespace mnr
