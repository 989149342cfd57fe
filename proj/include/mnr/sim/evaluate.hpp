#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mnr/config.hpp"
#include "mnr/core.hpp"
#include "mnr/sim/world.hpp"

// Offline metric evaluators: hitrate against held-out interactions, and a
// downstream-exposure share (PVR proxy) under a simulated ranking oracle.

namespace mnr::sim {

struct HitrateStats {
    double value = 0.0;             // mean over evaluated users
    std::size_t evaluated = 0;      // users with non-empty truth
    std::size_t empty_truth = 0;    // users skipped (warning count)
};

/// Per user: hits / |retrieved|; users with empty retrieval contribute 0;
/// users with empty (or missing) truth are excluded and counted as warnings.
/// `retrieved_by_user` holds each user's deduplicated retrieval union.
HitrateStats hitrate(const std::map<std::string, std::vector<std::string>>& retrieved_by_user,
                     const GroundTruth& truth);

struct PvrShares {
    std::map<std::string, double> by_channel;
    double background = 0.0;
};

/// Simulates the downstream stage: union of channel items plus a background
/// pool, ranked by the oracle, exposed top exposure_k. Each exposed item is
/// attributed exclusively to the channel giving it the highest final_score
/// (ties to the lexicographically smallest scenario_id), or to background.
/// Shares are counts / exposure_k.
PvrShares pvr_proxy(const std::map<std::string, RetrievalSet>& channels,
                    std::uint32_t exposure_k,
                    const std::function<double(const std::string&)>& oracle,
                    const std::vector<std::string>& background_pool);

GroundTruth load_ground_truth(const std::string& path);

struct EvaluationReport {
    HitrateStats hitrate;
    std::map<std::string, double> pvr_by_scenario;  // averaged over users
    double pvr_background = 0.0;
    std::uint64_t events_applied = 0;
    std::uint64_t events_dropped = 0;
};

/// Cut-based offline evaluation: replays the world's event log through a
/// fresh engine under `config`, materializes every key once, then scores
/// hitrate and per-scenario PVR.
EvaluationReport evaluate_world(const World& world, const AppConfig& config);

/// Same, but replays events.ndjson / truth.ndjson / world.json from a
/// directory written by the world generator.
EvaluationReport evaluate_world_dir(const std::string& dir, const AppConfig& config);

std::string evaluation_csv(const EvaluationReport& report);
std::string evaluation_summary(const EvaluationReport& report);

}  // namespace mnr::sim
