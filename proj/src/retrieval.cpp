#include "mnr/retrieval.hpp"

#include <algorithm>

#include "mnr/rng.hpp"

namespace mnr {

std::vector<ScoredCandidate> score_candidates(const std::vector<SnapshotEntry>& snapshot,
                                              const ScoringParams& params) {
    std::vector<ScoredCandidate> out;
    std::unordered_map<std::string, std::size_t> index_of;
    for (const auto& entry : snapshot) {
        for (const auto& item : entry.visit.items) {
            ScoredCandidate cand{item.item_id, item.category_id, item.rank_index,
                                 entry.time_index,
                                 final_score(item.rank_index, entry.time_index, params)};
            auto [it, inserted] = index_of.try_emplace(item.item_id, out.size());
            if (inserted) {
                out.push_back(std::move(cand));
                continue;
            }
            ScoredCandidate& kept = out[it->second];
            const bool better =
                cand.final_score > kept.final_score ||
                (cand.final_score == kept.final_score &&
                 (cand.time_index < kept.time_index ||
                  (cand.time_index == kept.time_index && cand.rank_index < kept.rank_index)));
            if (better) kept = std::move(cand);
        }
    }
    return out;
}

std::vector<ScoredCandidate> greedy_category_cap(const std::vector<ScoredCandidate>& candidates,
                                                 std::uint32_t k, std::uint32_t category_cap) {
    std::vector<ScoredCandidate> taken;
    taken.reserve(std::min<std::size_t>(k, candidates.size()));
    std::unordered_map<std::string, std::uint32_t> per_category;
    for (const auto& cand : candidates) {
        if (taken.size() >= k) break;
        auto& count = per_category[cand.category_id];
        if (count >= category_cap) continue;
        ++count;
        taken.push_back(cand);
    }
    return taken;
}

std::vector<ScoredCandidate> select_top_k(std::vector<ScoredCandidate> candidates,
                                          std::uint32_t k, std::uint32_t category_cap) {
    std::sort(candidates.begin(), candidates.end(), canonical_less);
    return greedy_category_cap(candidates, k, category_cap);
}

std::vector<ScoredCandidate> select_fifo_only(const std::vector<SnapshotEntry>& snapshot,
                                              std::uint32_t k, std::uint32_t category_cap,
                                              const ScoringParams& params) {
    // Snapshot entries are already newest-first and items are in rank order,
    // so traversal order is exactly (time_index asc, rank_index asc).
    std::vector<ScoredCandidate> candidates;
    std::unordered_map<std::string, bool> seen;
    for (const auto& entry : snapshot) {
        for (const auto& item : entry.visit.items) {
            auto [it, inserted] = seen.try_emplace(item.item_id, true);
            if (!inserted) continue;
            candidates.push_back(ScoredCandidate{
                item.item_id, item.category_id, item.rank_index, entry.time_index,
                final_score(item.rank_index, entry.time_index, params)});
        }
    }
    return greedy_category_cap(candidates, k, category_cap);
}

std::vector<ScoredCandidate> select_random(const std::vector<SnapshotEntry>& snapshot,
                                           std::uint32_t k, std::uint32_t category_cap,
                                           const ScoringParams& params, std::uint64_t seed,
                                           const std::string& user_id,
                                           const std::string& scenario_id) {
    std::vector<ScoredCandidate> candidates = score_candidates(snapshot, params);
    // Fix the pre-shuffle order so the permutation is a pure function of the
    // candidate set and the seed.
    std::sort(candidates.begin(), candidates.end(), canonical_less);
    std::uint64_t s = splitmix64(seed ^ fnv1a64(user_id));
    s = splitmix64(s ^ fnv1a64(scenario_id));
    Xoshiro256pp rng(s);
    fisher_yates(candidates, rng);
    return greedy_category_cap(candidates, k, category_cap);
}

ServingStore::ServingStore(std::size_t shard_count) : shards_(shard_count == 0 ? 1 : shard_count) {}

ServingStore::Shard& ServingStore::shard_for(const std::string& key) {
    return shards_[std::hash<std::string>{}(key) % shards_.size()];
}

const ServingStore::Shard& ServingStore::shard_for(const std::string& key) const {
    return shards_[std::hash<std::string>{}(key) % shards_.size()];
}

void ServingStore::put(RetrievalSet set) {
    const std::string key = QueueStore::make_key(set.user_id, set.scenario_id);
    auto ptr = std::make_shared<const RetrievalSet>(std::move(set));
    Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    shard.sets[key] = std::move(ptr);
}

std::shared_ptr<const RetrievalSet> ServingStore::get(const std::string& user_id,
                                                      const std::string& scenario_id) const {
    const std::string key = QueueStore::make_key(user_id, scenario_id);
    const Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    auto it = shard.sets.find(key);
    return it == shard.sets.end() ? nullptr : it->second;
}

std::size_t ServingStore::size() const {
    std::size_t n = 0;
    for (const auto& shard : shards_) {
        std::lock_guard lock(shard.mu);
        n += shard.sets.size();
    }
    return n;
}

void ServingStore::clear() {
    for (auto& shard : shards_) {
        std::lock_guard lock(shard.mu);
        shard.sets.clear();
    }
}

std::vector<ScoredCandidate> RetrievalEngine::select(const std::vector<SnapshotEntry>& snapshot,
                                                     const std::string& user_id,
                                                     const ScenarioConfig& config) const {
    switch (config.strategy) {
        case Strategy::kScored:
            return select_top_k(score_candidates(snapshot, config.scoring), config.k,
                                config.category_cap);
        case Strategy::kFifoOnly:
            return select_fifo_only(snapshot, config.k, config.category_cap, config.scoring);
        case Strategy::kRandom:
            return select_random(snapshot, config.k, config.category_cap, config.scoring,
                                 random_seed_, user_id, config.scenario_id);
    }
    return {};
}

RetrievalSet RetrievalEngine::materialize(const std::string& user_id,
                                          const ScenarioConfig& config, EpochMs now) {
    const auto snapshot = store_.snapshot(user_id, config.scenario_id);
    std::vector<ScoredCandidate> selected = select(snapshot, user_id, config);
    std::sort(selected.begin(), selected.end(), canonical_less);
    RetrievalSet set{user_id, config.scenario_id, std::move(selected), config.k, now};
    serving_.put(set);
    materializations_.fetch_add(1, std::memory_order_relaxed);
    return set;
}

std::vector<std::pair<std::string, std::shared_ptr<const RetrievalSet>>>
RetrievalEngine::retrieve_refs(const std::string& user_id,
                               const std::vector<std::string>& scenario_ids) const {
    std::vector<std::pair<std::string, std::shared_ptr<const RetrievalSet>>> out;
    out.reserve(scenario_ids.size());
    for (const auto& scenario_id : scenario_ids) {
        out.emplace_back(scenario_id, serving_.get(user_id, scenario_id));
    }
    return out;
}

std::map<std::string, RetrievalSet> RetrievalEngine::retrieve(
    const std::string& user_id, const std::vector<std::string>& scenario_ids,
    std::optional<std::uint32_t> k_per_scenario) const {
    std::map<std::string, RetrievalSet> out;
    for (const auto& scenario_id : scenario_ids) {
        auto stored = serving_.get(user_id, scenario_id);
        RetrievalSet set;
        if (stored != nullptr) {
            set = *stored;
            if (k_per_scenario.has_value() && set.items.size() > *k_per_scenario) {
                set.items.resize(*k_per_scenario);
            }
        } else {
            set.user_id = user_id;
            set.scenario_id = scenario_id;
        }
        out.emplace(scenario_id, std::move(set));
    }
    return out;
}

}  // namespace mnr
