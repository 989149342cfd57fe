#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mnr/core.hpp"

// Keyed in-memory state store: one bounded FIFO of truncated visits per
// (user, scenario). Writes on the same key are serialized by a shard mutex;
// distinct keys on different shards proceed concurrently. Snapshots are
// point-in-time copies and never change after they are returned.

namespace mnr {

struct QueueStats {
    std::size_t len_before = 0;
    std::size_t len_after = 0;
    int evicted = 0;  // 0 or 1: at most the single oldest visit per push
};

struct SnapshotEntry {
    std::uint32_t time_index = 0;  // 0 = newest visit
    TruncatedVisit visit;
};

struct StoreKey {
    std::string user_id;
    std::string scenario_id;
};

class QueueStore {
public:
    explicit QueueStore(std::size_t shard_count = 64);

    QueueStore(const QueueStore&) = delete;
    QueueStore& operator=(const QueueStore&) = delete;

    /// Appends the visit as newest, evicting the single oldest visit when the
    /// queue exceeds `capacity`. Assigns visit_seq = previous max + 1 (first
    /// visit gets 0). Empty visits must be filtered out by the caller.
    QueueStats push_visit(const std::string& user_id, const std::string& scenario_id,
                          TruncatedVisit visit, std::uint32_t capacity);

    /// Same, but forces the given visit_seq (op-log recovery of compacted
    /// frames). The per-key counter continues from max(seq)+1.
    QueueStats push_visit_with_seq(const std::string& user_id, const std::string& scenario_id,
                                   TruncatedVisit visit, std::uint32_t capacity,
                                   std::uint64_t visit_seq);

    /// Point-in-time copy of the queue, newest first, labeled with
    /// time_index 0, 1, ... Unknown key yields an empty vector.
    std::vector<SnapshotEntry> snapshot(const std::string& user_id,
                                        const std::string& scenario_id) const;

    /// Removes every key whose newest visit is older than now - ttl_ms.
    /// Removal is atomic per key. Returns the number of keys removed and,
    /// when `removed` is non-null, the keys themselves.
    std::size_t expire(EpochMs now, std::int64_t ttl_ms,
                       std::vector<StoreKey>* removed = nullptr);

    /// Removes one key if its newest visit is older than `cutoff`. Lets the
    /// write pipeline expire a key and its ingest-side state under one lock.
    bool remove_if_stale(const std::string& user_id, const std::string& scenario_id,
                         EpochMs cutoff);

    std::size_t key_count() const { return key_count_.load(std::memory_order_relaxed); }

    /// Canonical serialization of the full store: JSON with keys sorted by
    /// (user_id, scenario_id) and all visit fields included. Two stores with
    /// equal state serialize to byte-identical strings.
    std::string serialize() const;

    /// All (user, scenario) keys currently present. Safe to combine with
    /// per-key operations afterwards (unlike for_each_key, which holds the
    /// shard lock during the callback).
    std::vector<StoreKey> keys() const;

    /// Visits every key under its shard lock. Used by compaction and the
    /// offline batch driver. `fn(user_id, scenario_id, next_seq, visits)`.
    /// The callback must not re-enter the store.
    template <typename Fn>
    void for_each_key(Fn&& fn) const {
        for (const auto& shard : shards_) {
            std::lock_guard lock(shard.mu);
            for (const auto& [key, state] : shard.keys) {
                fn(user_of(key), scenario_of(key), state.next_seq, state.visits);
            }
        }
    }

    void clear();

    static std::string make_key(const std::string& user_id, const std::string& scenario_id);

private:
    struct KeyState {
        std::uint64_t next_seq = 0;
        std::deque<TruncatedVisit> visits;  // newest last
    };
    struct Shard {
        mutable std::mutex mu;
        std::unordered_map<std::string, KeyState> keys;
    };

    Shard& shard_for(const std::string& key);
    const Shard& shard_for(const std::string& key) const;
    static std::string user_of(const std::string& key);
    static std::string scenario_of(const std::string& key);

    QueueStats push_locked(KeyState& state, TruncatedVisit&& visit, std::uint32_t capacity);

    std::vector<Shard> shards_;
    std::atomic<std::size_t> key_count_{0};
};

}  // namespace mnr
