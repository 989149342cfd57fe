#include "mnr/queue_store.hpp"

#include <algorithm>
#include <functional>

#include <nlohmann/json.hpp>

namespace mnr {

namespace {
constexpr char kKeySep = '\x1f';
}

QueueStore::QueueStore(std::size_t shard_count)
    : shards_(shard_count == 0 ? 1 : shard_count) {}

std::string QueueStore::make_key(const std::string& user_id, const std::string& scenario_id) {
    std::string key;
    key.reserve(user_id.size() + 1 + scenario_id.size());
    key.append(user_id);
    key.push_back(kKeySep);
    key.append(scenario_id);
    return key;
}

std::string QueueStore::user_of(const std::string& key) {
    return key.substr(0, key.find(kKeySep));
}

std::string QueueStore::scenario_of(const std::string& key) {
    return key.substr(key.find(kKeySep) + 1);
}

QueueStore::Shard& QueueStore::shard_for(const std::string& key) {
    return shards_[std::hash<std::string>{}(key) % shards_.size()];
}

const QueueStore::Shard& QueueStore::shard_for(const std::string& key) const {
    return shards_[std::hash<std::string>{}(key) % shards_.size()];
}

QueueStats QueueStore::push_locked(KeyState& state, TruncatedVisit&& visit,
                                   std::uint32_t capacity) {
    QueueStats stats;
    stats.len_before = state.visits.size();
    state.visits.push_back(std::move(visit));
    if (state.visits.size() > capacity) {
        state.visits.pop_front();
        stats.evicted = 1;
    }
    stats.len_after = state.visits.size();
    return stats;
}

QueueStats QueueStore::push_visit(const std::string& user_id, const std::string& scenario_id,
                                  TruncatedVisit visit, std::uint32_t capacity) {
    const std::string key = make_key(user_id, scenario_id);
    Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    auto [it, inserted] = shard.keys.try_emplace(key);
    if (inserted) key_count_.fetch_add(1, std::memory_order_relaxed);
    KeyState& state = it->second;
    visit.visit_seq = state.next_seq++;
    return push_locked(state, std::move(visit), capacity);
}

QueueStats QueueStore::push_visit_with_seq(const std::string& user_id,
                                           const std::string& scenario_id, TruncatedVisit visit,
                                           std::uint32_t capacity, std::uint64_t visit_seq) {
    const std::string key = make_key(user_id, scenario_id);
    Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    auto [it, inserted] = shard.keys.try_emplace(key);
    if (inserted) key_count_.fetch_add(1, std::memory_order_relaxed);
    KeyState& state = it->second;
    visit.visit_seq = visit_seq;
    state.next_seq = std::max(state.next_seq, visit_seq + 1);
    return push_locked(state, std::move(visit), capacity);
}

std::vector<SnapshotEntry> QueueStore::snapshot(const std::string& user_id,
                                                const std::string& scenario_id) const {
    const std::string key = make_key(user_id, scenario_id);
    const Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    auto it = shard.keys.find(key);
    if (it == shard.keys.end()) return {};
    const auto& visits = it->second.visits;
    std::vector<SnapshotEntry> out;
    out.reserve(visits.size());
    std::uint32_t time_index = 0;
    for (auto rit = visits.rbegin(); rit != visits.rend(); ++rit) {
        out.push_back(SnapshotEntry{time_index++, *rit});
    }
    return out;
}

std::size_t QueueStore::expire(EpochMs now, std::int64_t ttl_ms, std::vector<StoreKey>* removed) {
    const EpochMs cutoff = now - ttl_ms;
    std::size_t count = 0;
    for (auto& shard : shards_) {
        std::lock_guard lock(shard.mu);
        for (auto it = shard.keys.begin(); it != shard.keys.end();) {
            const auto& visits = it->second.visits;
            if (!visits.empty() && visits.back().access_time < cutoff) {
                if (removed != nullptr) {
                    removed->push_back(StoreKey{user_of(it->first), scenario_of(it->first)});
                }
                it = shard.keys.erase(it);
                key_count_.fetch_sub(1, std::memory_order_relaxed);
                ++count;
            } else {
                ++it;
            }
        }
    }
    return count;
}

std::vector<StoreKey> QueueStore::keys() const {
    std::vector<StoreKey> out;
    for (const auto& shard : shards_) {
        std::lock_guard lock(shard.mu);
        for (const auto& [key, state] : shard.keys) {
            out.push_back(StoreKey{user_of(key), scenario_of(key)});
        }
    }
    return out;
}

bool QueueStore::remove_if_stale(const std::string& user_id, const std::string& scenario_id,
                                 EpochMs cutoff) {
    const std::string key = make_key(user_id, scenario_id);
    Shard& shard = shard_for(key);
    std::lock_guard lock(shard.mu);
    auto it = shard.keys.find(key);
    if (it == shard.keys.end()) return false;
    const auto& visits = it->second.visits;
    if (visits.empty() || visits.back().access_time >= cutoff) return false;
    shard.keys.erase(it);
    key_count_.fetch_sub(1, std::memory_order_relaxed);
    return true;
}

std::string QueueStore::serialize() const {
    struct Entry {
        std::string user_id;
        std::string scenario_id;
        std::uint64_t next_seq;
        std::deque<TruncatedVisit> visits;
    };
    std::vector<Entry> entries;
    for_each_key([&](const std::string& user, const std::string& scen, std::uint64_t next_seq,
                     const std::deque<TruncatedVisit>& visits) {
        entries.push_back(Entry{user, scen, next_seq, visits});
    });
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.scenario_id < b.scenario_id;
    });

    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& entry : entries) {
        nlohmann::ordered_json visits = nlohmann::ordered_json::array();
        for (const auto& visit : entry.visits) {
            nlohmann::ordered_json items = nlohmann::ordered_json::array();
            for (const auto& item : visit.items) {
                items.push_back({item.item_id, item.category_id, item.rank_index});
            }
            visits.push_back({{"access_time", visit.access_time},
                              {"visit_seq", visit.visit_seq},
                              {"items", std::move(items)}});
        }
        doc.push_back({{"user_id", entry.user_id},
                       {"scenario_id", entry.scenario_id},
                       {"next_seq", entry.next_seq},
                       {"visits", std::move(visits)}});
    }
    return doc.dump();
}

void QueueStore::clear() {
    for (auto& shard : shards_) {
        std::lock_guard lock(shard.mu);
        shard.keys.clear();
    }
    key_count_.store(0, std::memory_order_relaxed);
}

}  // namespace mnr
