#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mnr/core.hpp"
#include "mnr/rng.hpp"

// Synthetic multi-scenario world. Users hold latent per-category preference
// vectors that drift linearly over simulated time; each scenario owns an item
// slice and emits rank-log events whose ordering is preference plus Gaussian
// noise. Everything is a pure function of the spec (seed included): the same
// spec regenerates byte-identical event logs and ground truth.

namespace mnr::sim {

struct ScenarioWorldSpec {
    std::string scenario_id;
    double visit_rate_per_hour = 0.15;  // Poisson rate per user
    double noise_sigma = 0.5;           // ranking noise
    std::uint32_t list_length = 40;     // upstream ranked list emitted per visit
    std::uint32_t slice_size = 2500;    // scenario inventory
    std::uint32_t candidates_per_visit = 250;
};

struct WorldSpec {
    std::uint64_t seed = 1;
    std::uint32_t num_users = 100;
    std::uint32_t num_items = 2000;
    std::uint32_t num_categories = 20;
    double horizon_hours = 48.0;
    double eval_cut_fraction = 0.8;  // events in [0, cut); truth after cut
    double drift_per_hour = 0.01;
    std::uint32_t truth_per_user = 30;
    double truth_temperature = 0.3;   // 0 = exact top-J of preferences
    std::uint32_t truth_per_visit = 10;
    std::uint32_t truth_pool_size = 800;  // per-user pool for per-visit truth
    double homepage_rate_per_hour = 0.2;
    double day_hours = 0.0;  // offline batch period; 0 means horizon/7
    std::uint32_t background_pool = 200;
    std::uint32_t exposure_k = 40;
    double quality_weight = 0.5;
    double jitter_weight = 0.3;
    std::vector<ScenarioWorldSpec> scenarios;

    double cut_hours() const { return eval_cut_fraction * horizon_hours; }
    double batch_period_hours() const { return day_hours > 0.0 ? day_hours : horizon_hours / 7.0; }
};

WorldSpec parse_world_spec(const nlohmann::json& doc);
WorldSpec load_world_spec(const std::string& path);
nlohmann::json world_spec_to_json(const WorldSpec& spec);

/// Held-out future interactions per user, disjoint in time from the events.
struct GroundTruth {
    std::map<std::string, std::vector<std::string>> items_by_user;
};

struct HomepageVisit {
    double t_hours = 0.0;
    std::uint32_t visit_index = 0;
};

class World {
public:
    explicit World(WorldSpec spec);

    const WorldSpec& spec() const { return spec_; }

    /// Latent preference of user for item at simulated time (hours).
    double preference(std::uint32_t user, std::uint32_t item, double t_hours) const;

    /// All rank-log events in [0, cut), globally sorted by access time.
    std::vector<RankLogEvent> generate_events() const;

    /// Gumbel-perturbed top truth_per_user items at the midpoint of the
    /// held-out window (cut, horizon).
    GroundTruth ground_truth() const;

    /// Per-visit truth at an arbitrary time; `salt` keeps draws independent
    /// across visits. With truth_temperature = 0 this is the exact top-count.
    std::vector<std::string> truth_at(std::uint32_t user, double t_hours, std::uint32_t count,
                                      std::uint64_t salt) const;

    /// Same draw restricted to a precomputed candidate pool; the continuous
    /// evaluation path uses this so per-visit truth costs O(|pool|).
    std::vector<std::string> truth_from_pool(std::uint32_t user, double t_hours,
                                             std::uint32_t count, std::uint64_t salt,
                                             const std::vector<std::uint32_t>& pool) const;

    /// Top `count` universe items by noiseless preference at time t.
    std::vector<std::uint32_t> top_pref_items(std::uint32_t user, double t_hours,
                                              std::uint32_t count) const;

    /// Poisson homepage visit times in [0, cut) for continuous evaluation.
    std::vector<HomepageVisit> homepage_visits(std::uint32_t user) const;

    /// Deterministic per-user background items for exposure simulation.
    std::vector<std::string> background_items(std::uint32_t user) const;

    const std::vector<std::uint32_t>& universe() const { return universe_; }

    std::string user_id(std::uint32_t user) const { return "u" + std::to_string(user); }
    std::string item_id(std::uint32_t item) const { return "i" + std::to_string(item); }
    std::string category_id(std::uint32_t item) const {
        return "c" + std::to_string(category_of_[item]);
    }
    std::uint32_t item_index(const std::string& item_id) const;

    EpochMs to_epoch_ms(double t_hours) const {
        return kEpochBaseMs + static_cast<EpochMs>(t_hours * 3600000.0);
    }

    static constexpr EpochMs kEpochBaseMs = 1700000000000;

private:
    std::vector<double> poisson_times(double rate_per_hour, double until_hours,
                                      std::uint64_t stream_seed) const;

    WorldSpec spec_;
    std::vector<std::uint32_t> category_of_;       // item -> category
    std::vector<double> quality_;                  // item -> quality
    std::vector<double> base_pref_;                // user*C + c
    std::vector<double> drift_dir_;                // user*C + c
    std::vector<std::vector<std::uint32_t>> slices_;             // scenario -> items
    std::vector<std::vector<std::vector<std::uint32_t>>> slice_by_cat_;
    std::vector<std::uint32_t> universe_;          // union of slices, sorted
};

/// Writes events.ndjson, truth.ndjson and world.json into `out_dir`.
/// Returns the event count.
std::size_t generate_world_files(const WorldSpec& spec, const std::string& out_dir);

}  // namespace mnr::sim
