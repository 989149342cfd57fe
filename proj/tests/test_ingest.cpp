#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <variant>
#include <vector>

#include "mnr/ingest.hpp"
#include "mnr/oplog.hpp"
#include "mnr/queue_store.hpp"
#include "mnr/rng.hpp"

using namespace mnr;

namespace {

AppConfig small_config() {
    AppConfig config;
    ScenarioConfig s;
    s.scenario_id = "s";
    s.truncation = 3;
    s.queue_capacity = 2;
    s.k = 10;
    s.category_cap = 10;
    config.scenarios.emplace("s", s);
    return config;
}

// Channel sizing mirroring the production deployment this models: a large
// search channel truncated at 500, two sparse channels truncated at 20.
AppConfig channel_config() {
    AppConfig config;
    for (const auto& [id, trunc] :
         std::vector<std::pair<std::string, std::uint32_t>>{
             {"main_search", 500}, {"in_shop", 20}, {"photo_search", 20}}) {
        ScenarioConfig s;
        s.scenario_id = id;
        s.truncation = trunc;
        s.queue_capacity = 8;
        s.k = trunc;
        s.category_cap = trunc;
        config.scenarios.emplace(id, s);
    }
    return config;
}

RankLogEvent make_event(const std::string& id, const std::string& user, const std::string& scen,
                        EpochMs at, std::size_t n_items, std::uint64_t item_base = 0) {
    RankLogEvent event;
    event.event_id = id;
    event.user_id = user;
    event.scenario_id = scen;
    event.access_time = at;
    for (std::size_t i = 0; i < n_items; ++i) {
        event.items.push_back(ItemRef{"i" + std::to_string(item_base + i),
                                      "c" + std::to_string(i % 4),
                                      1.0 - 0.01 * static_cast<double>(i)});
    }
    return event;
}

}  // namespace

TEST_CASE("parse_event accepts a well-formed frame") {
    const auto result = parse_event(
        R"({"event_id":"e1","user_id":"u1","scenario_id":"s","access_time":1700000000000,)"
        R"("items":[{"item_id":"a","category_id":"c1","score":0.9},)"
        R"({"item_id":"b","category_id":"c2","score":0.5},)"
        R"({"item_id":"c","category_id":"c1","score":0.2}],"extra":"ignored"})");
    REQUIRE(std::holds_alternative<RankLogEvent>(result));
    const auto& event = std::get<RankLogEvent>(result);
    CHECK(event.event_id == "e1");
    CHECK(event.items.size() == 3);
    CHECK(event.items[1].item_id == "b");
}

TEST_CASE("parse_event rejects unsorted items") {
    const auto result = parse_event(
        R"({"event_id":"e1","user_id":"u1","scenario_id":"s","access_time":1,)"
        R"("items":[{"item_id":"a","score":0.2},{"item_id":"b","score":0.9}]})",
        42);
    REQUIRE(std::holds_alternative<ParseError>(result));
    const auto& err = std::get<ParseError>(result);
    CHECK(err.field == "items[1].score");
    CHECK(err.offset == 42);
}

TEST_CASE("parse_event rejects missing fields and bad frames") {
    auto missing_user = parse_event(
        R"({"event_id":"e1","scenario_id":"s","access_time":1,"items":[]})");
    REQUIRE(std::holds_alternative<ParseError>(missing_user));
    CHECK(std::get<ParseError>(missing_user).field == "user_id");

    auto dup = parse_event(
        R"({"event_id":"e1","user_id":"u","scenario_id":"s","access_time":1,)"
        R"("items":[{"item_id":"a","score":0.9},{"item_id":"a","score":0.8}]})");
    REQUIRE(std::holds_alternative<ParseError>(dup));
    CHECK(std::get<ParseError>(dup).field == "items[1].item_id");

    CHECK(std::holds_alternative<ParseError>(parse_event("not json at all")));
    CHECK(std::holds_alternative<ParseError>(parse_event(R"(["array"])")));
}

TEST_CASE("missing category maps to the UNKNOWN sentinel") {
    const auto result = parse_event(
        R"({"event_id":"e","user_id":"u","scenario_id":"s","access_time":1,)"
        R"("items":[{"item_id":"a","score":1.0}]})");
    REQUIRE(std::holds_alternative<RankLogEvent>(result));
    CHECK(std::get<RankLogEvent>(result).items[0].category_id == "UNKNOWN");
}

TEST_CASE("truncate_visit keeps the prefix with original rank positions") {
    const AppConfig config = small_config();
    const auto event = make_event("e", "u", "s", 5, 5);
    const TruncatedVisit visit = truncate_visit(event, config.scenarios.at("s"));
    REQUIRE(visit.items.size() == 3);
    for (std::uint32_t i = 0; i < 3; ++i) {
        CHECK(visit.items[i].rank_index == i);
        CHECK(visit.items[i].item_id == event.items[i].item_id);
    }
    CHECK(visit.access_time == 5);
}

TEST_CASE("per-channel truncation thresholds apply") {
    const AppConfig config = channel_config();
    const auto big = make_event("e1", "u", "main_search", 1, 600);
    CHECK(truncate_visit(big, config.scenarios.at("main_search")).items.size() == 500);
    const auto shop = make_event("e2", "u", "in_shop", 1, 600);
    CHECK(truncate_visit(shop, config.scenarios.at("in_shop")).items.size() == 20);
    const auto photo = make_event("e3", "u", "photo_search", 1, 600);
    CHECK(truncate_visit(photo, config.scenarios.at("photo_search")).items.size() == 20);
}

TEST_CASE("empty events truncate to empty visits and are not enqueued") {
    const AppConfig config = small_config();
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);
    const Ack ack = pipeline.ingest(make_event("e0", "u", "s", 1, 0));
    CHECK(ack.status == Ack::Status::kDropped);
    CHECK(ack.reason == "empty_visit");
    CHECK(store.key_count() == 0);
}

TEST_CASE("ingest acks: applied, duplicate, unknown scenario") {
    const AppConfig config = small_config();
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);

    CHECK(pipeline.ingest(make_event("e1", "u", "s", 1, 2)).status == Ack::Status::kApplied);
    CHECK(pipeline.ingest(make_event("e1", "u", "s", 1, 2)).status == Ack::Status::kDuplicate);
    CHECK(store.snapshot("u", "s").size() == 1);

    const Ack unknown = pipeline.ingest(make_event("e2", "u", "other", 1, 2));
    CHECK(unknown.status == Ack::Status::kDropped);
    CHECK(unknown.reason == "unknown_scenario");
}

TEST_CASE("burst of 1000 events matches the reference replay model") {
    const AppConfig config = small_config();  // capacity 2
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);

    // Reference model: a plain vector capped to the queue capacity.
    std::vector<std::string> reference;  // newest last, first item id per visit
    for (int i = 0; i < 1000; ++i) {
        pipeline.ingest(make_event("e" + std::to_string(i), "u", "s", i, 2, i * 10));
        reference.push_back("i" + std::to_string(i * 10));
        if (reference.size() > 2) reference.erase(reference.begin());
    }
    const auto snap = store.snapshot("u", "s");
    REQUIRE(snap.size() == reference.size());
    for (std::size_t t = 0; t < snap.size(); ++t) {
        CHECK(snap[t].visit.items[0].item_id == reference[reference.size() - 1 - t]);
    }
}

TEST_CASE("idempotency: random duplication leaves state identical") {
    const AppConfig config = small_config();
    Xoshiro256pp rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RankLogEvent> events;
        for (int i = 0; i < 40; ++i) {
            events.push_back(make_event("e" + std::to_string(i),
                                        "u" + std::to_string(rng.bounded(3)), "s", i, 2, i));
        }
        QueueStore once_store;
        IngestPipeline once(config, once_store, nullptr);
        for (const auto& event : events) once.ingest(event);

        QueueStore dup_store;
        IngestPipeline dup(config, dup_store, nullptr);
        for (const auto& event : events) {
            dup.ingest(event);
            while (rng.bounded(3) == 0) dup.ingest(event);  // immediate redeliveries
        }
        CHECK(once_store.serialize() == dup_store.serialize());
    }
}

TEST_CASE("cross-key interleavings commute") {
    const AppConfig config = small_config();
    std::vector<RankLogEvent> per_key[3];
    for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < 20; ++i) {
            per_key[k].push_back(make_event("k" + std::to_string(k) + "e" + std::to_string(i),
                                            "u" + std::to_string(k), "s", i, 2, k * 100 + i));
        }
    }

    auto run = [&](const std::vector<int>& key_order) {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        std::size_t next[3] = {0, 0, 0};
        for (const int k : key_order) pipeline.ingest(per_key[k][next[k]++]);
        return store.serialize();
    };

    // Two different interleavings that both preserve per-key order.
    std::vector<int> order_a, order_b;
    for (int i = 0; i < 20; ++i) {
        for (int k : {0, 1, 2}) order_a.push_back(k);
        for (int k : {2, 0, 1}) order_b.push_back(k);
    }
    // Random merge, still preserving per-key order.
    Xoshiro256pp rng(5);
    std::vector<int> order_c;
    std::size_t remaining[3] = {20, 20, 20};
    while (order_c.size() < 60) {
        const int k = static_cast<int>(rng.bounded(3));
        if (remaining[k] > 0) {
            order_c.push_back(k);
            --remaining[k];
        }
    }

    const std::string state_a = run(order_a);
    CHECK(state_a == run(order_b));
    CHECK(state_a == run(order_c));
}

TEST_CASE("rejected events leave state bit-identical") {
    const AppConfig config = small_config();
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);
    pipeline.ingest(make_event("e1", "u", "s", 1, 2));
    const std::string before = store.serialize();

    pipeline.ingest(make_event("e2", "u", "other", 2, 2));  // unknown scenario
    pipeline.ingest(make_event("e1", "u", "s", 3, 3));      // duplicate id
    pipeline.ingest(make_event("e3", "u", "s", 4, 0));      // empty
    CHECK(store.serialize() == before);
}

TEST_CASE("dedup window is bounded and forgets oldest ids") {
    AppConfig config = small_config();
    config.dedup_window = 4;
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);
    for (int i = 0; i < 5; ++i) {
        pipeline.ingest(make_event("e" + std::to_string(i), "u", "s", i, 1));
    }
    // e0 fell out of the window of 4; redelivery is applied again.
    CHECK(pipeline.ingest(make_event("e0", "u", "s", 9, 1)).status == Ack::Status::kApplied);
    CHECK(pipeline.ingest(make_event("e4", "u", "s", 9, 1)).status == Ack::Status::kDuplicate);
}

TEST_CASE("replay_stream applies file order and counts outcomes") {
    const AppConfig config = small_config();
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);
    std::istringstream in(
        R"({"event_id":"e1","user_id":"u","scenario_id":"s","access_time":10,"items":[{"item_id":"a","score":1.0}]})"
        "\n"
        R"({"event_id":"e1","user_id":"u","scenario_id":"s","access_time":11,"items":[{"item_id":"a","score":1.0}]})"
        "\n"
        "garbage\n"
        R"({"event_id":"e2","user_id":"u","scenario_id":"s","access_time":12,"items":[{"item_id":"b","score":1.0}]})"
        "\n");
    const ReplaySummary summary = replay_stream(in, pipeline);
    CHECK(summary.lines == 4);
    CHECK(summary.applied == 2);
    CHECK(summary.duplicate == 1);
    CHECK(summary.parse_errors == 1);
    const auto snap = store.snapshot("u", "s");
    REQUIRE(snap.size() == 2);
    CHECK(snap[0].visit.access_time == 12);
}

TEST_CASE("op-log: acked events survive recovery; partial tail is ignored") {
    namespace fs = std::filesystem;
    const std::string log_path =
        (fs::temp_directory_path() / "mnr_test_recover.oplog").string();
    fs::remove(log_path);

    AppConfig config = small_config();
    config.persistence.enabled = true;
    config.persistence.log_path = log_path;

    std::string live_state;
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        pipeline.recover();  // opens the empty log
        for (int i = 0; i < 50; ++i) {
            pipeline.ingest(make_event("e" + std::to_string(i), "u" + std::to_string(i % 5),
                                       "s", 100 + i, 2, i));
        }
        live_state = store.serialize();
        pipeline.close_log();
    }
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        const RecoveryStats stats = pipeline.recover();
        CHECK(stats.frames == 50);
        CHECK(stats.applied == 50);
        CHECK(store.serialize() == live_state);
        // Dedup state also recovered.
        CHECK(pipeline.ingest(make_event("e49", "u4", "s", 999, 2)).status ==
              Ack::Status::kDuplicate);
        pipeline.close_log();
    }
    {
        // Simulate a crash mid-append: chop bytes off the tail. Recovery must
        // replay the intact prefix and ignore the partial frame.
        const auto size = fs::file_size(log_path);
        fs::resize_file(log_path, size - 7);
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        const RecoveryStats stats = pipeline.recover();
        CHECK(stats.frames == 49);
        pipeline.close_log();
    }
    fs::remove(log_path);
}

TEST_CASE("op-log: expire frames replay to the same state") {
    namespace fs = std::filesystem;
    const std::string log_path =
        (fs::temp_directory_path() / "mnr_test_expire.oplog").string();
    fs::remove(log_path);

    AppConfig config = small_config();
    config.persistence.enabled = true;
    config.persistence.log_path = log_path;

    std::string live_state;
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        pipeline.recover();
        pipeline.ingest(make_event("old", "u_old", "s", 1000, 2));
        pipeline.ingest(make_event("new", "u_new", "s", 500000, 2));
        CHECK(pipeline.expire(/*now=*/500001, /*ttl_ms=*/1000) == 1);
        pipeline.ingest(make_event("after", "u_old", "s", 500002, 2));
        live_state = store.serialize();
        pipeline.close_log();
    }
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        const RecoveryStats stats = pipeline.recover();
        CHECK(stats.expires == 1);
        CHECK(store.serialize() == live_state);
        pipeline.close_log();
    }
    fs::remove(log_path);
}

TEST_CASE("op-log compaction preserves state and sequence numbers") {
    namespace fs = std::filesystem;
    const std::string log_path =
        (fs::temp_directory_path() / "mnr_test_compact.oplog").string();
    fs::remove(log_path);

    AppConfig config = small_config();
    config.persistence.enabled = true;
    config.persistence.log_path = log_path;
    config.persistence.compact_every_ops = 64;

    std::string live_state;
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        pipeline.recover();
        for (int i = 0; i < 300; ++i) {  // several compaction rounds
            pipeline.ingest(make_event("e" + std::to_string(i), "u" + std::to_string(i % 7),
                                       "s", 100 + i, 2, i));
        }
        live_state = store.serialize();
        pipeline.close_log();
    }
    // The compacted log is much smaller than 300 frames' worth.
    {
        std::size_t frames = 0;
        OpLog::read_frames(log_path, [&](const Frame&) { ++frames; });
        CHECK(frames < 300);
    }
    {
        QueueStore store;
        IngestPipeline pipeline(config, store, nullptr);
        pipeline.recover();
        CHECK(store.serialize() == live_state);  // bit-identical, visit_seq included
        pipeline.close_log();
    }
    fs::remove(log_path);
}

TEST_CASE("pipeline expire removes queue and ingest state together") {
    const AppConfig config = small_config();
    QueueStore store;
    IngestPipeline pipeline(config, store, nullptr);
    pipeline.ingest(make_event("e1", "u", "s", 1000, 1));
    CHECK(pipeline.expire(/*now=*/1000 + 10 + 1, /*ttl_ms=*/10) == 1);
    CHECK(store.key_count() == 0);
    // Dedup state went with the key: the same event id applies again.
    CHECK(pipeline.ingest(make_event("e1", "u", "s", 2000, 1)).status == Ack::Status::kApplied);
}
