#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <sstream>
#include <string>

namespace mnr {

/// Cumulative latency histogram with fixed microsecond buckets.
class LatencyHistogram {
public:
    static constexpr std::array<std::uint64_t, 9> kBucketBoundsUs = {
        100, 250, 500, 1000, 2500, 5000, 10000, 25000, 50000};

    void observe(std::uint64_t us) {
        for (std::size_t i = 0; i < kBucketBoundsUs.size(); ++i) {
            if (us <= kBucketBoundsUs[i]) {
                buckets_[i].fetch_add(1, std::memory_order_relaxed);
                break;
            }
        }
        count_.fetch_add(1, std::memory_order_relaxed);
        sum_us_.fetch_add(us, std::memory_order_relaxed);
    }

    void render(std::ostringstream& out, const std::string& name) const {
        std::uint64_t cumulative = 0;
        for (std::size_t i = 0; i < kBucketBoundsUs.size(); ++i) {
            cumulative += buckets_[i].load(std::memory_order_relaxed);
            out << name << "_bucket{le=\"" << kBucketBoundsUs[i] << "\"} " << cumulative << "\n";
        }
        out << name << "_bucket{le=\"+Inf\"} " << count_.load(std::memory_order_relaxed) << "\n";
        out << name << "_sum " << sum_us_.load(std::memory_order_relaxed) << "\n";
        out << name << "_count " << count_.load(std::memory_order_relaxed) << "\n";
    }

private:
    std::array<std::atomic<std::uint64_t>, kBucketBoundsUs.size()> buckets_{};
    std::atomic<std::uint64_t> count_{0};
    std::atomic<std::uint64_t> sum_us_{0};
};

struct Metrics {
    std::atomic<std::uint64_t> events_ingested{0};
    std::atomic<std::uint64_t> events_duplicate{0};
    std::atomic<std::uint64_t> events_dropped{0};
    std::atomic<std::uint64_t> retrieve_calls{0};
    std::atomic<std::uint64_t> expired_keys{0};
    LatencyHistogram retrieve_latency_us;

    /// Plain-text exposition; gauges supplied by the caller.
    std::string render(std::size_t queue_keys, std::uint64_t materializations) const {
        std::ostringstream out;
        out << "mnr_events_ingested_total " << events_ingested.load() << "\n";
        out << "mnr_events_duplicate_total " << events_duplicate.load() << "\n";
        out << "mnr_events_dropped_total " << events_dropped.load() << "\n";
        out << "mnr_queue_keys " << queue_keys << "\n";
        out << "mnr_materializations_total " << materializations << "\n";
        out << "mnr_retrieve_calls_total " << retrieve_calls.load() << "\n";
        out << "mnr_expired_keys_total " << expired_keys.load() << "\n";
        retrieve_latency_us.render(out, "mnr_retrieve_latency_us");
        return out.str();
    }
};

}  // namespace mnr
