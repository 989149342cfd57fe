#include "mnr/config.hpp"

#include <cstdlib>
#include <fstream>

namespace mnr {

namespace {

using nlohmann::json;

const json& require(const json& obj, const std::string& field, const std::string& path) {
    auto it = obj.find(field);
    if (it == obj.end()) throw ConfigError(path + "." + field, "missing required field");
    return *it;
}

std::uint32_t positive_u32(const json& v, const std::string& path) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1 ||
        v.get<std::int64_t>() > 0xffffffffll) {
        throw ConfigError(path, "must be an integer >= 1");
    }
    return v.get<std::uint32_t>();
}

double positive_finite(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d) || d <= 0.0) throw ConfigError(path, "must be finite and > 0");
    return d;
}

ScenarioConfig parse_scenario(const json& obj, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path, "must be an object");
    ScenarioConfig cfg;
    cfg.scenario_id = require(obj, "scenario_id", path).get<std::string>();
    if (cfg.scenario_id.empty()) throw ConfigError(path + ".scenario_id", "must be non-empty");
    cfg.truncation = positive_u32(require(obj, "truncation", path), path + ".truncation");
    cfg.queue_capacity =
        positive_u32(require(obj, "queue_capacity", path), path + ".queue_capacity");
    cfg.k = positive_u32(require(obj, "k", path), path + ".k");
    cfg.category_cap = positive_u32(require(obj, "category_cap", path), path + ".category_cap");
    cfg.scoring.alpha = positive_finite(require(obj, "alpha", path), path + ".alpha");
    cfg.scoring.beta = positive_finite(require(obj, "beta", path), path + ".beta");
    if (auto it = obj.find("strategy"); it != obj.end()) {
        if (!it->is_string() || !parse_strategy(it->get<std::string>(), cfg.strategy)) {
            throw ConfigError(path + ".strategy", "must be one of SCORED, FIFO_ONLY, RANDOM");
        }
    }
    return cfg;
}

}  // namespace

AppConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("$", "config root must be an object");
    AppConfig config;
    if (auto it = doc.find("listen_addr"); it != doc.end()) {
        config.listen_addr = it->get<std::string>();
    }
    if (auto it = doc.find("ttl_ms"); it != doc.end()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() <= 0) {
            throw ConfigError("ttl_ms", "must be an integer > 0");
        }
        config.ttl_ms = it->get<std::int64_t>();
    }
    if (auto it = doc.find("dedup_window"); it != doc.end()) {
        config.dedup_window = positive_u32(*it, "dedup_window");
    }
    if (auto it = doc.find("random_seed"); it != doc.end()) {
        if (!it->is_number_integer()) throw ConfigError("random_seed", "must be an integer");
        config.random_seed = it->get<std::uint64_t>();
    }
    if (auto it = doc.find("persistence"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError("persistence", "must be an object");
        if (auto e = it->find("enabled"); e != it->end()) {
            if (!e->is_boolean()) throw ConfigError("persistence.enabled", "must be a boolean");
            config.persistence.enabled = e->get<bool>();
        }
        if (auto p = it->find("log_path"); p != it->end()) {
            config.persistence.log_path = p->get<std::string>();
        }
        if (auto c = it->find("compact_every_ops"); c != it->end()) {
            config.persistence.compact_every_ops =
                positive_u32(*c, "persistence.compact_every_ops");
        }
        if (config.persistence.enabled && config.persistence.log_path.empty()) {
            throw ConfigError("persistence.log_path", "must be non-empty when enabled");
        }
    }

    const json& scenarios = require(doc, "scenarios", "$");
    if (!scenarios.is_array() || scenarios.empty()) {
        throw ConfigError("scenarios", "must be a non-empty array");
    }
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const std::string path = "scenarios[" + std::to_string(i) + "]";
        ScenarioConfig cfg = parse_scenario(scenarios[i], path);
        auto [it, inserted] = config.scenarios.emplace(cfg.scenario_id, std::move(cfg));
        if (!inserted) {
            throw ConfigError(path + ".scenario_id", "duplicate scenario_id '" + it->first + "'");
        }
    }
    return config;
}

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw ConfigError("$", "cannot open config file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    AppConfig config = parse_config(doc);
    if (const char* addr = std::getenv("MNR_LISTEN_ADDR"); addr != nullptr && *addr != '\0') {
        config.listen_addr = addr;
    }
    return config;
}

nlohmann::json config_to_json(const AppConfig& config) {
    json scenarios = json::array();
    for (const auto& [id, cfg] : config.scenarios) {
        scenarios.push_back({{"scenario_id", cfg.scenario_id},
                             {"truncation", cfg.truncation},
                             {"queue_capacity", cfg.queue_capacity},
                             {"k", cfg.k},
                             {"category_cap", cfg.category_cap},
                             {"alpha", cfg.scoring.alpha},
                             {"beta", cfg.scoring.beta},
                             {"strategy", strategy_name(cfg.strategy)}});
    }
    return json{{"listen_addr", config.listen_addr},
                {"ttl_ms", config.ttl_ms},
                {"dedup_window", config.dedup_window},
                {"random_seed", config.random_seed},
                {"persistence",
                 {{"enabled", config.persistence.enabled},
                  {"log_path", config.persistence.log_path},
                  {"compact_every_ops", config.persistence.compact_every_ops}}},
                {"scenarios", std::move(scenarios)}};
}

}  // namespace mnr
