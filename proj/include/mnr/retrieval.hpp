#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mnr/config.hpp"
#include "mnr/core.hpp"
#include "mnr/queue_store.hpp"

// Turns queue snapshots into retrieval sets. The strategy decides which items
// are selected (and the order the greedy diversity pass walks); the stored set
// is always re-sorted into canonical order so its invariants hold for every
// strategy. Materialization happens on the write path; retrieve() is a pure
// lookup and never evaluates the scoring formula.

namespace mnr {

/// One ScoredCandidate per distinct item_id in the snapshot. When an item
/// occurs in several visits the occurrence with the highest final_score wins
/// (ties: smaller time_index, then smaller rank_index).
std::vector<ScoredCandidate> score_candidates(const std::vector<SnapshotEntry>& snapshot,
                                              const ScoringParams& params);

/// Greedy pass over `candidates` in the given order: an item is taken unless
/// its category already holds `category_cap` taken items; stops at k.
std::vector<ScoredCandidate> greedy_category_cap(const std::vector<ScoredCandidate>& candidates,
                                                 std::uint32_t k, std::uint32_t category_cap);

/// Canonical-order selection: sort by (final_score desc, time_index asc,
/// rank_index asc, item_id asc), then the greedy cap pass.
std::vector<ScoredCandidate> select_top_k(std::vector<ScoredCandidate> candidates,
                                          std::uint32_t k, std::uint32_t category_cap);

/// Arrival-order selection: (time_index asc, rank_index asc), first occurrence
/// wins dedup, then the greedy cap pass. Scores are filled in for diagnostics
/// but do not influence the order.
std::vector<ScoredCandidate> select_fifo_only(const std::vector<SnapshotEntry>& snapshot,
                                              std::uint32_t k, std::uint32_t category_cap,
                                              const ScoringParams& params);

/// Uniform shuffle of the deduplicated candidates (xoshiro256++ seeded from
/// (seed, user_id, scenario_id) through splitmix64), then the greedy cap pass.
std::vector<ScoredCandidate> select_random(const std::vector<SnapshotEntry>& snapshot,
                                           std::uint32_t k, std::uint32_t category_cap,
                                           const ScoringParams& params, std::uint64_t seed,
                                           const std::string& user_id,
                                           const std::string& scenario_id);

/// Map (user, scenario) -> latest materialized RetrievalSet. Whole-set
/// replacement per key; readers get an immutable shared copy.
class ServingStore {
public:
    explicit ServingStore(std::size_t shard_count = 64);

    ServingStore(const ServingStore&) = delete;
    ServingStore& operator=(const ServingStore&) = delete;

    void put(RetrievalSet set);
    std::shared_ptr<const RetrievalSet> get(const std::string& user_id,
                                            const std::string& scenario_id) const;
    std::size_t size() const;
    void clear();

private:
    struct Shard {
        mutable std::mutex mu;
        std::unordered_map<std::string, std::shared_ptr<const RetrievalSet>> sets;
    };
    Shard& shard_for(const std::string& key);
    const Shard& shard_for(const std::string& key) const;
    std::vector<Shard> shards_;
};

class RetrievalEngine {
public:
    RetrievalEngine(const QueueStore& store, ServingStore& serving, std::uint64_t random_seed)
        : store_(store), serving_(serving), random_seed_(random_seed) {}

    /// Snapshot -> strategy selection -> canonical sort -> atomic replacement
    /// in the serving store. An empty snapshot stores an empty set (still
    /// stamped with generated_at, distinguishing it from "never computed").
    RetrievalSet materialize(const std::string& user_id, const ScenarioConfig& config,
                             EpochMs now);

    /// Selection only, no store write. Used by materialize and by callers
    /// comparing strategies on a fixed snapshot.
    std::vector<ScoredCandidate> select(const std::vector<SnapshotEntry>& snapshot,
                                        const std::string& user_id,
                                        const ScenarioConfig& config) const;

    /// Stored sets for the requested scenarios, prefix-limited to
    /// k_per_scenario when given. Missing keys map to empty sets with
    /// generated_at = 0. Never computes scores.
    std::map<std::string, RetrievalSet> retrieve(
        const std::string& user_id, const std::vector<std::string>& scenario_ids,
        std::optional<std::uint32_t> k_per_scenario) const;

    /// Zero-copy variant for the serving path: shared handles to the stored
    /// sets (nullptr for never-computed keys). Prefix limiting is left to the
    /// renderer so the sets are not copied per request.
    std::vector<std::pair<std::string, std::shared_ptr<const RetrievalSet>>> retrieve_refs(
        const std::string& user_id, const std::vector<std::string>& scenario_ids) const;

    std::uint64_t materializations() const {
        return materializations_.load(std::memory_order_relaxed);
    }

    void set_random_seed(std::uint64_t seed) { random_seed_ = seed; }

private:
    const QueueStore& store_;
    ServingStore& serving_;
    std::uint64_t random_seed_;
    std::atomic<std::uint64_t> materializations_{0};
};

}  // namespace mnr
