#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>
#include <vector>

#include "mnr/queue_store.hpp"
#include "mnr/rng.hpp"

using namespace mnr;

namespace {

TruncatedVisit make_visit(EpochMs at, std::initializer_list<const char*> ids) {
    TruncatedVisit v;
    v.access_time = at;
    std::uint32_t rank = 0;
    for (const char* id : ids) {
        v.items.push_back(VisitItem{id, "cat", rank++});
    }
    return v;
}

TruncatedVisit tagged_visit(EpochMs at, std::uint64_t tag) {
    TruncatedVisit v;
    v.access_time = at;
    v.items.push_back(VisitItem{"i" + std::to_string(tag), "c", 0});
    return v;
}

}  // namespace

TEST_CASE("push evicts the single oldest visit beyond capacity") {
    QueueStore store;
    store.push_visit("u", "s", make_visit(1, {"a"}), 2);
    store.push_visit("u", "s", make_visit(2, {"b"}), 2);
    const QueueStats stats = store.push_visit("u", "s", make_visit(3, {"c"}), 2);
    CHECK(stats.len_before == 2);
    CHECK(stats.len_after == 2);
    CHECK(stats.evicted == 1);

    const auto snap = store.snapshot("u", "s");
    REQUIRE(snap.size() == 2);
    CHECK(snap[0].time_index == 0);
    CHECK(snap[0].visit.items[0].item_id == "c");
    CHECK(snap[0].visit.visit_seq == 2);
    CHECK(snap[1].time_index == 1);
    CHECK(snap[1].visit.items[0].item_id == "b");
    CHECK(snap[1].visit.visit_seq == 1);
}

TEST_CASE("capacity 1 keeps exactly the latest visit") {
    QueueStore store;
    for (int i = 0; i < 10; ++i) {
        store.push_visit("u", "s", tagged_visit(i, i), 1);
        const auto snap = store.snapshot("u", "s");
        REQUIRE(snap.size() == 1);
        CHECK(snap[0].visit.items[0].item_id == "i" + std::to_string(i));
    }
}

TEST_CASE("unknown key snapshots empty") {
    QueueStore store;
    CHECK(store.snapshot("nobody", "nowhere").empty());
}

TEST_CASE("10k random push sequences match the suffix oracle") {
    Xoshiro256pp rng(123456);
    for (int seq = 0; seq < 10000; ++seq) {
        const auto capacity = static_cast<std::uint32_t>(1 + rng.bounded(16));
        const auto pushes = static_cast<std::size_t>(rng.bounded(501));
        QueueStore store(4);
        std::vector<std::uint64_t> all_tags;
        for (std::size_t p = 0; p < pushes; ++p) {
            const std::uint64_t tag = rng.next();
            all_tags.push_back(tag);
            const QueueStats stats =
                store.push_visit("u", "s", tagged_visit(static_cast<EpochMs>(p), tag), capacity);
            CHECK(stats.len_after <= capacity);
        }
        const auto snap = store.snapshot("u", "s");
        const std::size_t expect = std::min<std::size_t>(pushes, capacity);
        REQUIRE(snap.size() == expect);
        // Newest-first labels 0..len-1 and the retained set is the suffix.
        for (std::size_t i = 0; i < expect; ++i) {
            CHECK(snap[i].time_index == i);
            const std::uint64_t want_tag = all_tags[pushes - 1 - i];
            CHECK(snap[i].visit.items[0].item_id == "i" + std::to_string(want_tag));
            CHECK(snap[i].visit.visit_seq == pushes - 1 - i);
        }
    }
}

TEST_CASE("expire removes exactly the brute-force stale set") {
    QueueStore store;
    Xoshiro256pp rng(777);
    const EpochMs now = 1'000'000;
    const std::int64_t ttl = 10'000;
    std::vector<std::pair<std::string, bool>> expected;  // user -> stale?
    for (int i = 0; i < 1000; ++i) {
        const std::string user = "u" + std::to_string(i);
        const EpochMs newest = static_cast<EpochMs>(rng.bounded(2 * ttl));
        // One older visit, then the newest one which decides staleness.
        store.push_visit(user, "s", tagged_visit(newest / 2, i), 4);
        store.push_visit(user, "s", tagged_visit(newest, i), 4);
        expected.emplace_back(user, newest < now - ttl);
    }
    std::vector<StoreKey> removed;
    const std::size_t count = store.expire(now, ttl, &removed);

    std::size_t want = 0;
    for (const auto& [user, stale] : expected) {
        if (stale) ++want;
        CHECK(store.snapshot(user, "s").empty() == stale);
    }
    CHECK(count == want);
    CHECK(removed.size() == want);
    CHECK(store.key_count() == 1000 - want);
}

TEST_CASE("recent keys survive expire") {
    QueueStore store;
    const EpochMs now = 100 * 3600 * 1000ll;
    store.push_visit("u1", "s", tagged_visit(now - 25ll * 3600 * 1000, 1), 4);
    store.push_visit("u2", "s", tagged_visit(now - 1ll * 3600 * 1000, 2), 4);
    CHECK(store.expire(now, 24ll * 3600 * 1000) == 1);
    CHECK(store.snapshot("u1", "s").empty());
    CHECK_FALSE(store.snapshot("u2", "s").empty());
}

TEST_CASE("snapshot contents never change once returned") {
    QueueStore store;
    store.push_visit("u", "s", tagged_visit(1, 100), 4);
    auto snap = store.snapshot("u", "s");
    REQUIRE(snap.size() == 1);
    store.push_visit("u", "s", tagged_visit(2, 200), 4);
    CHECK(snap.size() == 1);
    CHECK(snap[0].visit.items[0].item_id == "i100");
}

TEST_CASE("serialize is canonical across insertion orders and shard counts") {
    QueueStore a;
    QueueStore b(3);
    a.push_visit("u1", "s1", tagged_visit(1, 1), 4);
    a.push_visit("u2", "s1", tagged_visit(2, 2), 4);
    b.push_visit("u2", "s1", tagged_visit(2, 2), 4);
    b.push_visit("u1", "s1", tagged_visit(1, 1), 4);
    CHECK(a.serialize() == b.serialize());
    b.push_visit("u3", "s9", tagged_visit(3, 3), 4);
    CHECK(a.serialize() != b.serialize());
}

// Sequential-specification checker: every concurrent snapshot must equal the
// last-capacity suffix of the first j pushes for some j, with j consistent
// with the writer's progress around the read.
TEST_CASE("snapshots are linearizable against concurrent pushes") {
    QueueStore store;
    constexpr std::uint32_t kCapacity = 4;
    constexpr std::uint64_t kPushes = 20000;
    std::atomic<std::uint64_t> completed{0};

    std::thread writer([&] {
        for (std::uint64_t p = 0; p < kPushes; ++p) {
            store.push_visit("u", "s", tagged_visit(static_cast<EpochMs>(p), p), kCapacity);
            completed.store(p + 1, std::memory_order_release);
        }
    });

    std::atomic<bool> failed{false};
    std::thread reader([&] {
        std::uint64_t last_j = 0;
        while (completed.load(std::memory_order_acquire) < kPushes) {
            const std::uint64_t before = completed.load(std::memory_order_acquire);
            const auto snap = store.snapshot("u", "s");
            const std::uint64_t after = completed.load(std::memory_order_acquire);
            // Reconstruct j from the newest tag: state after j pushes has
            // newest visit_seq j-1 and size min(j, capacity).
            std::uint64_t j = 0;
            if (!snap.empty()) {
                j = snap[0].visit.visit_seq + 1;
            }
            if (j < before || j > after + 1) failed.store(true);
            if (j < last_j) failed.store(true);  // monotone per reader
            last_j = j;
            if (snap.size() != std::min<std::uint64_t>(j, kCapacity)) failed.store(true);
            for (std::size_t i = 0; i < snap.size(); ++i) {
                const std::uint64_t want = j - 1 - i;
                if (snap[i].time_index != i || snap[i].visit.visit_seq != want ||
                    snap[i].visit.items[0].item_id != "i" + std::to_string(want)) {
                    failed.store(true);
                }
            }
        }
    });

    writer.join();
    reader.join();
    CHECK_FALSE(failed.load());
}
