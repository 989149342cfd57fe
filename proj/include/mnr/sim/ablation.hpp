#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mnr/config.hpp"
#include "mnr/sim/stats.hpp"
#include "mnr/sim/world.hpp"

// Experiment drivers. Each run is fully determined by (world spec, config,
// seed); arms within a seed share the same generated world, so cross-arm
// comparisons are paired.

namespace mnr::sim {

struct AblationArm {
    std::string name;
    std::vector<double> per_seed;  // hitrate per seed, aligned with report.seeds
    double mean = 0.0;
    double ci95_half = 0.0;
};

struct AblationPair {
    std::string a;
    std::string b;
    PairedT test;
};

struct AblationReport {
    std::string name;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationArm> arms;
    std::vector<AblationPair> pairs;  // empty when seeds < 2
    bool significance = false;        // pairs computed
    bool underpowered = false;        // fewer than 10 seeds
};

/// Scenario configuration derived from a world spec: truncation = list
/// length, and desk-scale defaults everywhere else.
AppConfig default_sim_config(const WorldSpec& spec);

/// name is one of "strategy", "online_offline", "alpha_sweep".
/// `parallelism` seeds run concurrently (results independent of scheduling).
AblationReport run_ablation(const std::string& name, const WorldSpec& spec,
                            const AppConfig& config, const std::vector<std::uint64_t>& seeds,
                            unsigned parallelism = 2);

std::string ablation_csv(const AblationReport& report);
std::string ablation_summary(const AblationReport& report);

/// Alpha values swept by the alpha_sweep ablation.
const std::vector<double>& alpha_sweep_values();

}  // namespace mnr::sim
