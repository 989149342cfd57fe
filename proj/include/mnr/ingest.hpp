#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "mnr/config.hpp"
#include "mnr/core.hpp"
#include "mnr/oplog.hpp"
#include "mnr/queue_store.hpp"
#include "mnr/retrieval.hpp"

// Wire-format parsing plus the keyed-serial write pipeline: dedup window,
// per-scenario truncation, queue push, optional materialize-on-write and
// op-log append, all under one per-key lock so acked effects are visible to
// readers before the ack returns.

namespace mnr {

struct ParseError {
    std::string field;      // offending field, or "" for frame-level errors
    std::size_t offset = 0; // byte offset of the line within its stream
    std::string message;
};

using ParseResult = std::variant<RankLogEvent, ParseError>;

/// Decodes one NDJSON line into an event, re-verifying the invariants:
/// required fields present, items sorted by score non-increasing, no
/// duplicate item_id. Unknown fields are ignored. A missing/empty
/// category_id maps to the "UNKNOWN" sentinel.
ParseResult parse_event(std::string_view line, std::size_t stream_offset = 0);

/// Prefix truncation to the scenario threshold; original rank positions kept.
TruncatedVisit truncate_visit(const RankLogEvent& event, const ScenarioConfig& config);

struct Ack {
    enum class Status { kApplied, kDuplicate, kDropped };
    Status status = Status::kDropped;
    std::string reason;  // set for kDropped

    static Ack applied() { return {Status::kApplied, {}}; }
    static Ack duplicate() { return {Status::kDuplicate, {}}; }
    static Ack dropped(std::string reason) { return {Status::kDropped, std::move(reason)}; }
};

struct RecoveryStats {
    std::uint64_t frames = 0;
    std::uint64_t applied = 0;
    std::uint64_t expires = 0;
};

class IngestPipeline {
public:
    IngestPipeline(const AppConfig& config, QueueStore& store, RetrievalEngine* engine,
                   std::size_t lock_count = 64);

    IngestPipeline(const IngestPipeline&) = delete;
    IngestPipeline& operator=(const IngestPipeline&) = delete;

    /// Exactly-once effect per event_id within the dedup window. On applied,
    /// the queue (and, in streaming mode, the serving set) reflect the visit
    /// before this returns.
    Ack ingest(const RankLogEvent& event);

    /// Streaming mode re-materializes the key's retrieval set after every
    /// applied event. Off for offline/batch drivers.
    void set_auto_materialize(bool on) { auto_materialize_ = on; }

    /// Clock used to stamp generated_at; replay overrides it with event time.
    void set_clock(std::function<EpochMs()> clock) { clock_ = std::move(clock); }

    /// Expires idle keys (queue, dedup window and visit counter together) and
    /// logs an EXPIRE frame. Returns the number of keys removed.
    std::size_t expire(EpochMs now, std::int64_t ttl_ms);

    /// Replays the op-log at config.persistence.log_path into the store, then
    /// opens the log for appending. Call before serving traffic.
    RecoveryStats recover();

    /// Flushes and closes the log (graceful shutdown).
    void close_log();

    const AppConfig& config() const { return config_; }

private:
    struct DedupWindow {
        std::deque<std::string> order;
        std::unordered_set<std::string> ids;
    };
    struct KeyMeta {
        DedupWindow dedup;
    };

    Ack apply(const RankLogEvent& event, std::optional<std::uint64_t> forced_seq, bool log_it,
              bool* need_compact);
    void append_push_frame(const RankLogEvent& event);
    void compact_locked();
    std::size_t expire_impl(EpochMs now, std::int64_t ttl_ms, bool log_it);

    std::mutex& lock_for(const std::string& key);

    const AppConfig& config_;
    QueueStore& store_;
    RetrievalEngine* engine_;
    bool auto_materialize_ = true;
    std::function<EpochMs()> clock_;

    // Appliers hold pipeline_mu_ shared plus one key lock; expire and
    // compaction hold it exclusive so they observe a quiescent pipeline.
    std::shared_mutex pipeline_mu_;
    std::vector<std::mutex> key_locks_;
    std::mutex meta_mu_;
    std::unordered_map<std::string, KeyMeta> meta_;

    std::mutex log_mu_;
    OpLog log_;
    bool logging_enabled_ = false;
    std::uint64_t ops_since_compact_ = 0;
};

/// Reads NDJSON events from a stream and applies them through the pipeline in
/// file order, with the pipeline clock pinned to each event's access_time.
/// `pace` > 0 sleeps (t_i - t_{i-1}) / pace between events.
struct ReplaySummary {
    std::uint64_t lines = 0;
    std::uint64_t applied = 0;
    std::uint64_t duplicate = 0;
    std::uint64_t dropped = 0;
    std::uint64_t parse_errors = 0;
};
ReplaySummary replay_stream(std::istream& in, IngestPipeline& pipeline, double pace = 0.0);

}  // namespace mnr
