#include "mnr/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <nlohmann/json.hpp>

namespace mnr {

namespace {

using nlohmann::json;

EpochMs system_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string event_to_wire(const RankLogEvent& event,
                          std::optional<std::uint64_t> visit_seq = std::nullopt) {
    json items = json::array();
    for (const auto& item : event.items) {
        items.push_back({{"item_id", item.item_id},
                         {"category_id", item.category_id},
                         {"score", item.rank_score}});
    }
    json doc{{"event_id", event.event_id},
             {"user_id", event.user_id},
             {"scenario_id", event.scenario_id},
             {"access_time", event.access_time},
             {"items", std::move(items)}};
    if (visit_seq.has_value()) doc["visit_seq"] = *visit_seq;
    return doc.dump();
}

}  // namespace

ParseResult parse_event(std::string_view line, std::size_t stream_offset) {
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
        return ParseError{"", stream_offset, "invalid JSON frame"};
    }
    if (!doc.is_object()) {
        return ParseError{"", stream_offset, "frame is not an object"};
    }

    RankLogEvent event;
    auto get_string = [&](const char* field, std::string& out) -> const char* {
        auto it = doc.find(field);
        if (it == doc.end()) return "missing required field";
        if (!it->is_string()) return "must be a string";
        out = it->get<std::string>();
        if (out.empty()) return "must be non-empty";
        return nullptr;
    };
    if (const char* err = get_string("event_id", event.event_id)) {
        return ParseError{"event_id", stream_offset, err};
    }
    if (const char* err = get_string("user_id", event.user_id)) {
        return ParseError{"user_id", stream_offset, err};
    }
    if (const char* err = get_string("scenario_id", event.scenario_id)) {
        return ParseError{"scenario_id", stream_offset, err};
    }
    if (auto it = doc.find("access_time"); it == doc.end() || !it->is_number_integer()) {
        return ParseError{"access_time", stream_offset,
                          it == doc.end() ? "missing required field" : "must be an integer"};
    } else {
        event.access_time = it->get<EpochMs>();
    }

    auto items_it = doc.find("items");
    if (items_it == doc.end() || !items_it->is_array()) {
        return ParseError{"items", stream_offset,
                          items_it == doc.end() ? "missing required field" : "must be an array"};
    }
    event.items.reserve(items_it->size());
    std::unordered_set<std::string> seen_ids;
    std::size_t i = 0;
    for (const auto& entry : *items_it) {
        const std::string path = "items[" + std::to_string(i) + "]";
        if (!entry.is_object()) return ParseError{path, stream_offset, "must be an object"};
        ItemRef item;
        auto id_it = entry.find("item_id");
        if (id_it == entry.end() || !id_it->is_string() || id_it->get<std::string>().empty()) {
            return ParseError{path + ".item_id", stream_offset, "missing or empty"};
        }
        item.item_id = id_it->get<std::string>();
        if (auto cat_it = entry.find("category_id");
            cat_it != entry.end() && cat_it->is_string() && !cat_it->get<std::string>().empty()) {
            item.category_id = cat_it->get<std::string>();
        } else {
            item.category_id = "UNKNOWN";
        }
        auto score_it = entry.find("score");
        if (score_it == entry.end() || !score_it->is_number()) {
            return ParseError{path + ".score", stream_offset, "missing or not a number"};
        }
        item.rank_score = score_it->get<double>();
        if (!std::isfinite(item.rank_score)) {
            return ParseError{path + ".score", stream_offset, "must be finite"};
        }
        if (!event.items.empty() && item.rank_score > event.items.back().rank_score) {
            return ParseError{path + ".score", stream_offset,
                              "items not sorted by score non-increasing"};
        }
        if (!seen_ids.insert(item.item_id).second) {
            return ParseError{path + ".item_id", stream_offset,
                              "duplicate item_id '" + item.item_id + "'"};
        }
        event.items.push_back(std::move(item));
        ++i;
    }
    return event;
}

TruncatedVisit truncate_visit(const RankLogEvent& event, const ScenarioConfig& config) {
    TruncatedVisit visit;
    visit.access_time = event.access_time;
    const std::size_t n = std::min<std::size_t>(event.items.size(), config.truncation);
    visit.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        visit.items.push_back(VisitItem{event.items[i].item_id, event.items[i].category_id,
                                        static_cast<std::uint32_t>(i)});
    }
    return visit;
}

IngestPipeline::IngestPipeline(const AppConfig& config, QueueStore& store,
                               RetrievalEngine* engine, std::size_t lock_count)
    : config_(config),
      store_(store),
      engine_(engine),
      clock_(system_now_ms),
      key_locks_(lock_count == 0 ? 1 : lock_count) {}

std::mutex& IngestPipeline::lock_for(const std::string& key) {
    return key_locks_[std::hash<std::string>{}(key) % key_locks_.size()];
}

Ack IngestPipeline::ingest(const RankLogEvent& event) {
    bool need_compact = false;
    Ack ack;
    {
        std::shared_lock pipeline_lock(pipeline_mu_);
        ack = apply(event, std::nullopt, /*log_it=*/true, &need_compact);
    }
    if (need_compact) {
        std::unique_lock pipeline_lock(pipeline_mu_);
        std::lock_guard log_lock(log_mu_);
        if (logging_enabled_ && ops_since_compact_ >= config_.persistence.compact_every_ops) {
            compact_locked();
        }
    }
    return ack;
}

Ack IngestPipeline::apply(const RankLogEvent& event, std::optional<std::uint64_t> forced_seq,
                          bool log_it, bool* need_compact) {
    const ScenarioConfig* scenario = config_.find_scenario(event.scenario_id);
    if (scenario == nullptr) return Ack::dropped("unknown_scenario");

    const std::string key = QueueStore::make_key(event.user_id, event.scenario_id);
    std::lock_guard key_lock(lock_for(key));

    KeyMeta* meta;
    {
        std::lock_guard meta_lock(meta_mu_);
        meta = &meta_[key];
    }
    if (meta->dedup.ids.contains(event.event_id)) return Ack::duplicate();

    TruncatedVisit visit = truncate_visit(event, *scenario);
    if (visit.items.empty()) return Ack::dropped("empty_visit");

    meta->dedup.ids.insert(event.event_id);
    meta->dedup.order.push_back(event.event_id);
    if (meta->dedup.order.size() > config_.dedup_window) {
        meta->dedup.ids.erase(meta->dedup.order.front());
        meta->dedup.order.pop_front();
    }

    if (forced_seq.has_value()) {
        store_.push_visit_with_seq(event.user_id, event.scenario_id, std::move(visit),
                                   scenario->queue_capacity, *forced_seq);
    } else {
        store_.push_visit(event.user_id, event.scenario_id, std::move(visit),
                          scenario->queue_capacity);
    }

    if (auto_materialize_ && engine_ != nullptr) {
        engine_->materialize(event.user_id, *scenario, clock_());
    }

    if (log_it && logging_enabled_) {
        std::lock_guard log_lock(log_mu_);
        log_.append(FrameType::kPush, event_to_wire(event));
        ++ops_since_compact_;
        if (need_compact != nullptr &&
            ops_since_compact_ >= config_.persistence.compact_every_ops) {
            *need_compact = true;
        }
    }
    return Ack::applied();
}

std::size_t IngestPipeline::expire(EpochMs now, std::int64_t ttl_ms) {
    std::unique_lock pipeline_lock(pipeline_mu_);
    return expire_impl(now, ttl_ms, /*log_it=*/true);
}

std::size_t IngestPipeline::expire_impl(EpochMs now, std::int64_t ttl_ms, bool log_it) {
    const EpochMs cutoff = now - ttl_ms;
    struct Candidate {
        std::string user_id;
        std::string scenario_id;
    };
    std::vector<Candidate> candidates;
    store_.for_each_key([&](const std::string& user, const std::string& scen, std::uint64_t,
                            const std::deque<TruncatedVisit>& visits) {
        if (!visits.empty() && visits.back().access_time < cutoff) {
            candidates.push_back(Candidate{user, scen});
        }
    });
    std::size_t removed = 0;
    for (const auto& cand : candidates) {
        if (!store_.remove_if_stale(cand.user_id, cand.scenario_id, cutoff)) continue;
        const std::string key = QueueStore::make_key(cand.user_id, cand.scenario_id);
        std::lock_guard meta_lock(meta_mu_);
        meta_.erase(key);
        ++removed;
    }
    if (log_it && logging_enabled_ && removed > 0) {
        std::lock_guard log_lock(log_mu_);
        log_.append(FrameType::kExpire, json{{"now", now}, {"ttl_ms", ttl_ms}}.dump());
        ++ops_since_compact_;
        if (ops_since_compact_ >= config_.persistence.compact_every_ops) compact_locked();
    }
    return removed;
}

void IngestPipeline::compact_locked() {
    // Rewrites the log as one synthetic PUSH frame per retained visit, in
    // sorted key order. The visit_seq extension field keeps sequence numbers
    // stable across recovery.
    struct KeyDump {
        std::string user_id;
        std::string scenario_id;
        std::vector<TruncatedVisit> visits;
    };
    std::vector<KeyDump> dump;
    store_.for_each_key([&](const std::string& user, const std::string& scen, std::uint64_t,
                            const std::deque<TruncatedVisit>& visits) {
        dump.push_back(KeyDump{user, scen, {visits.begin(), visits.end()}});
    });
    std::sort(dump.begin(), dump.end(), [](const KeyDump& a, const KeyDump& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.scenario_id < b.scenario_id;
    });

    std::vector<Frame> frames;
    for (const auto& entry : dump) {
        for (const auto& visit : entry.visits) {
            RankLogEvent event;
            event.event_id = "compact-" + entry.user_id + "-" + entry.scenario_id + "-" +
                             std::to_string(visit.visit_seq);
            event.user_id = entry.user_id;
            event.scenario_id = entry.scenario_id;
            event.access_time = visit.access_time;
            event.items.reserve(visit.items.size());
            // Synthetic descending scores keep the frame valid under the wire
            // schema; rank_score is not retained past truncation anyway.
            const double n = static_cast<double>(visit.items.size());
            for (std::size_t i = 0; i < visit.items.size(); ++i) {
                event.items.push_back(ItemRef{visit.items[i].item_id,
                                              visit.items[i].category_id,
                                              n - static_cast<double>(i)});
            }
            frames.push_back(Frame{FrameType::kPush, event_to_wire(event, visit.visit_seq)});
        }
    }
    log_.rewrite(frames);
    ops_since_compact_ = 0;
}

RecoveryStats IngestPipeline::recover() {
    RecoveryStats stats;
    if (!config_.persistence.enabled) return stats;

    std::unique_lock pipeline_lock(pipeline_mu_);
    const bool saved_auto = auto_materialize_;
    auto_materialize_ = false;
    OpLog::read_frames(config_.persistence.log_path, [&](const Frame& frame) {
        ++stats.frames;
        if (frame.type == FrameType::kPush) {
            ParseResult parsed = parse_event(frame.payload);
            if (std::holds_alternative<ParseError>(parsed)) return;  // skip corrupt frame
            const auto& event = std::get<RankLogEvent>(parsed);
            std::optional<std::uint64_t> forced_seq;
            const json doc = json::parse(frame.payload, nullptr, false);
            if (doc.is_object() && doc.contains("visit_seq") &&
                doc["visit_seq"].is_number_unsigned()) {
                forced_seq = doc["visit_seq"].get<std::uint64_t>();
            }
            if (apply(event, forced_seq, /*log_it=*/false, nullptr).status ==
                Ack::Status::kApplied) {
                ++stats.applied;
            }
        } else if (frame.type == FrameType::kExpire) {
            const json doc = json::parse(frame.payload, nullptr, false);
            if (doc.is_object() && doc.contains("now") && doc.contains("ttl_ms")) {
                expire_impl(doc["now"].get<EpochMs>(), doc["ttl_ms"].get<std::int64_t>(),
                            /*log_it=*/false);
                ++stats.expires;
            }
        }
    });
    auto_materialize_ = saved_auto;

    // Warm the serving store so reads work immediately after recovery.
    if (engine_ != nullptr) {
        const EpochMs now = clock_();
        for (const auto& key : store_.keys()) {
            if (const ScenarioConfig* scenario = config_.find_scenario(key.scenario_id)) {
                engine_->materialize(key.user_id, *scenario, now);
            }
        }
    }

    std::lock_guard log_lock(log_mu_);
    log_.open(config_.persistence.log_path);
    logging_enabled_ = true;
    ops_since_compact_ = stats.frames;
    if (ops_since_compact_ >= config_.persistence.compact_every_ops) compact_locked();
    return stats;
}

void IngestPipeline::close_log() {
    std::unique_lock pipeline_lock(pipeline_mu_);
    std::lock_guard log_lock(log_mu_);
    log_.close();
    logging_enabled_ = false;
}

ReplaySummary replay_stream(std::istream& in, IngestPipeline& pipeline, double pace) {
    ReplaySummary summary;
    EpochMs replay_clock = 0;
    pipeline.set_clock([&replay_clock] { return replay_clock; });

    std::string line;
    std::size_t offset = 0;
    EpochMs prev_time = 0;
    while (std::getline(in, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        ++summary.lines;
        ParseResult parsed = parse_event(line, line_offset);
        if (std::holds_alternative<ParseError>(parsed)) {
            ++summary.parse_errors;
            ++summary.dropped;
            continue;
        }
        const auto& event = std::get<RankLogEvent>(parsed);
        if (pace > 0.0 && prev_time > 0 && event.access_time > prev_time) {
            const auto delay = static_cast<std::int64_t>(
                static_cast<double>(event.access_time - prev_time) / pace);
            if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        prev_time = event.access_time;
        replay_clock = event.access_time;
        const Ack ack = pipeline.ingest(event);
        switch (ack.status) {
            case Ack::Status::kApplied: ++summary.applied; break;
            case Ack::Status::kDuplicate: ++summary.duplicate; break;
            case Ack::Status::kDropped: ++summary.dropped; break;
        }
    }
    return summary;
}

}  // namespace mnr
