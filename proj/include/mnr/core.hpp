#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

// Domain types shared by every module, plus the candidate scoring function.
// All of these are immutable values once built; they are safe to copy across
// threads and never carry hidden state.

namespace mnr {

using EpochMs = std::int64_t;

/// One item as it appears in a ranking-stage log line.
struct ItemRef {
    std::string item_id;
    std::string category_id;  // "UNKNOWN" sentinel when the log carries none
    double rank_score = 0.0;  // upstream ranker output, diagnostics only
};

/// One ranking-stage visit: the ordered, scored list a ranking model produced
/// for a user in one scenario. items are sorted by rank_score non-increasing;
/// an item's rank_index is its 0-based position in this list.
struct RankLogEvent {
    std::string event_id;  // idempotency key
    std::string user_id;
    std::string scenario_id;
    EpochMs access_time = 0;
    std::vector<ItemRef> items;
};

struct VisitItem {
    std::string item_id;
    std::string category_id;
    std::uint32_t rank_index = 0;
};

/// A visit after per-scenario truncation. Prefix truncation preserves the
/// original 0-based rank positions.
struct TruncatedVisit {
    EpochMs access_time = 0;
    std::uint64_t visit_seq = 0;  // assigned by the queue store on insert
    std::vector<VisitItem> items;
};

/// Balancing hyper-parameters of the scoring formula. Both must be finite and
/// strictly positive; configuration loading rejects anything else, so scoring
/// itself never re-validates.
struct ScoringParams {
    double alpha = 50.0;
    double beta = 10.0;

    bool valid() const {
        return std::isfinite(alpha) && alpha > 0.0 && std::isfinite(beta) && beta > 0.0;
    }
};

/// Process-wide count of scoring evaluations. The retrieve path is required
/// to be a pure lookup; tests assert this counter does not move during reads.
inline std::atomic<std::uint64_t>& scoring_eval_count() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

/// finalScore = (alpha / (alpha + rank_index)) * (beta / (beta + time_index)).
/// Strictly decreasing in each index, 1.0 iff both indices are 0, always in
/// (0, 1] for non-negative indices and valid params.
inline double final_score(std::uint32_t rank_index, std::uint32_t time_index,
                          const ScoringParams& params) {
    scoring_eval_count().fetch_add(1, std::memory_order_relaxed);
    const double rank_factor = params.alpha / (params.alpha + static_cast<double>(rank_index));
    const double time_factor = params.beta / (params.beta + static_cast<double>(time_index));
    return rank_factor * time_factor;
}

struct ScoredCandidate {
    std::string item_id;
    std::string category_id;
    std::uint32_t rank_index = 0;
    std::uint32_t time_index = 0;
    double final_score = 0.0;
};

/// Canonical candidate order: final_score desc, then time_index asc,
/// rank_index asc, item_id asc. Makes every selection deterministic.
inline bool canonical_less(const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    if (a.time_index != b.time_index) return a.time_index < b.time_index;
    if (a.rank_index != b.rank_index) return a.rank_index < b.rank_index;
    return a.item_id < b.item_id;
}

/// Materialized top-k items for one (user, scenario) channel.
struct RetrievalSet {
    std::string user_id;
    std::string scenario_id;
    std::vector<ScoredCandidate> items;  // canonical order
    std::uint32_t k = 0;                 // requested size
    EpochMs generated_at = 0;            // 0 = never computed
};

enum class Strategy { kScored, kFifoOnly, kRandom };

const char* strategy_name(Strategy s);
bool parse_strategy(std::string_view name, Strategy& out);

/// Per-scenario knobs. All counts are >= 1 (enforced at config load).
struct ScenarioConfig {
    std::string scenario_id;
    std::uint32_t truncation = 500;    // T_s: items kept per visit
    std::uint32_t queue_capacity = 8;  // Q_s: visits retained per key
    std::uint32_t k = 100;             // retrieval set size
    std::uint32_t category_cap = 10;   // max items per category in a set
    ScoringParams scoring;
    Strategy strategy = Strategy::kScored;
};

}  // namespace mnr
