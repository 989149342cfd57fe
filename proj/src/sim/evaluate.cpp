#include "mnr/sim/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mnr/ingest.hpp"
#include "mnr/queue_store.hpp"
#include "mnr/retrieval.hpp"

namespace mnr::sim {

using nlohmann::json;

HitrateStats hitrate(const std::map<std::string, std::vector<std::string>>& retrieved_by_user,
                     const GroundTruth& truth) {
    HitrateStats stats;
    double sum = 0.0;
    for (const auto& [user, retrieved] : retrieved_by_user) {
        auto truth_it = truth.items_by_user.find(user);
        if (truth_it == truth.items_by_user.end() || truth_it->second.empty()) {
            ++stats.empty_truth;
            continue;
        }
        ++stats.evaluated;
        if (retrieved.empty()) continue;  // contributes 0
        const std::unordered_set<std::string> truth_set(truth_it->second.begin(),
                                                        truth_it->second.end());
        std::size_t hits = 0;
        for (const auto& item : retrieved) {
            if (truth_set.contains(item)) ++hits;
        }
        sum += static_cast<double>(hits) / static_cast<double>(retrieved.size());
    }
    stats.value = stats.evaluated == 0 ? 0.0 : sum / static_cast<double>(stats.evaluated);
    return stats;
}

PvrShares pvr_proxy(const std::map<std::string, RetrievalSet>& channels,
                    std::uint32_t exposure_k,
                    const std::function<double(const std::string&)>& oracle,
                    const std::vector<std::string>& background_pool) {
    struct Attribution {
        double best_score = 0.0;
        std::string channel;  // empty = background
    };
    std::unordered_map<std::string, Attribution> items;
    for (const auto& [scenario_id, set] : channels) {
        for (const auto& cand : set.items) {
            auto [it, inserted] = items.try_emplace(cand.item_id);
            Attribution& attr = it->second;
            if (inserted || cand.final_score > attr.best_score ||
                (cand.final_score == attr.best_score &&
                 (attr.channel.empty() || scenario_id < attr.channel))) {
                attr.best_score = cand.final_score;
                attr.channel = scenario_id;
            }
        }
    }
    for (const auto& item : background_pool) {
        items.try_emplace(item);  // keeps channel attribution when present
    }

    struct Ranked {
        std::string item;
        double score;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(items.size());
    for (const auto& [item, attr] : items) {
        ranked.push_back(Ranked{item, oracle(item)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
    const std::size_t exposed = std::min<std::size_t>(exposure_k, ranked.size());

    PvrShares shares;
    for (const auto& [scenario_id, set] : channels) shares.by_channel[scenario_id] = 0.0;
    std::size_t background_count = 0;
    for (std::size_t i = 0; i < exposed; ++i) {
        const auto& attr = items[ranked[i].item];
        if (attr.channel.empty()) {
            ++background_count;
        } else {
            shares.by_channel[attr.channel] += 1.0;
        }
    }
    const double denom = static_cast<double>(exposure_k);
    for (auto& [scenario_id, count] : shares.by_channel) count /= denom;
    shares.background = static_cast<double>(background_count) / denom;
    return shares;
}

GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw std::runtime_error("cannot open truth file '" + path + "'");
    GroundTruth truth;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json doc = json::parse(line);
        truth.items_by_user[doc.at("user_id").get<std::string>()] =
            doc.at("items").get<std::vector<std::string>>();
    }
    return truth;
}

namespace {

/// Post-ingest half of the evaluation: materialize, union, score.
EvaluationReport finish_evaluation(const World& world, const AppConfig& config,
                                   QueueStore& store, RetrievalEngine& engine,
                                   const GroundTruth& truth, EvaluationReport report) {
    const EpochMs now = world.to_epoch_ms(world.spec().cut_hours());
    for (const auto& key : store.keys()) {
        if (const ScenarioConfig* scenario = config.find_scenario(key.scenario_id)) {
            engine.materialize(key.user_id, *scenario, now);
        }
    }

    std::vector<std::string> scenario_ids;
    for (const auto& [id, cfg] : config.scenarios) scenario_ids.push_back(id);

    const double t_mid = (world.spec().cut_hours() + world.spec().horizon_hours) / 2.0;

    std::map<std::string, std::vector<std::string>> retrieved_by_user;
    std::map<std::string, double> pvr_sums;
    double background_sum = 0.0;
    for (const auto& id : scenario_ids) pvr_sums[id] = 0.0;

    for (std::uint32_t u = 0; u < world.spec().num_users; ++u) {
        const std::string user = world.user_id(u);
        const auto channels = engine.retrieve(user, scenario_ids, std::nullopt);

        std::unordered_set<std::string> seen;
        std::vector<std::string> union_items;
        for (const auto& [id, set] : channels) {
            for (const auto& cand : set.items) {
                if (seen.insert(cand.item_id).second) union_items.push_back(cand.item_id);
            }
        }
        retrieved_by_user[user] = std::move(union_items);

        const auto oracle = [&](const std::string& item_id) {
            return world.preference(u, world.item_index(item_id), t_mid);
        };
        const PvrShares shares =
            pvr_proxy(channels, world.spec().exposure_k, oracle, world.background_items(u));
        for (const auto& [id, share] : shares.by_channel) pvr_sums[id] += share;
        background_sum += shares.background;
    }

    report.hitrate = hitrate(retrieved_by_user, truth);
    const double n = static_cast<double>(world.spec().num_users);
    for (const auto& [id, sum] : pvr_sums) report.pvr_by_scenario[id] = sum / n;
    report.pvr_background = background_sum / n;
    return report;
}

}  // namespace

EvaluationReport evaluate_world(const World& world, const AppConfig& config) {
    EvaluationReport report;
    QueueStore store;
    ServingStore serving;
    RetrievalEngine engine(store, serving, config.random_seed);
    IngestPipeline pipeline(config, store, &engine);
    pipeline.set_auto_materialize(false);

    EpochMs clock = 0;
    pipeline.set_clock([&clock] { return clock; });
    for (const auto& event : world.generate_events()) {
        clock = event.access_time;
        const Ack ack = pipeline.ingest(event);
        if (ack.status == Ack::Status::kApplied) {
            ++report.events_applied;
        } else if (ack.status == Ack::Status::kDropped) {
            ++report.events_dropped;
        }
    }
    return finish_evaluation(world, config, store, engine, world.ground_truth(),
                             std::move(report));
}

EvaluationReport evaluate_world_dir(const std::string& dir, const AppConfig& config) {
    const World world(load_world_spec(dir + "/world.json"));
    const GroundTruth truth = load_ground_truth(dir + "/truth.ndjson");

    EvaluationReport report;
    QueueStore store;
    ServingStore serving;
    RetrievalEngine engine(store, serving, config.random_seed);
    IngestPipeline pipeline(config, store, &engine);
    pipeline.set_auto_materialize(false);

    std::ifstream events_in(dir + "/events.ndjson");
    if (!events_in.is_open()) {
        throw std::runtime_error("cannot open '" + dir + "/events.ndjson'");
    }
    const ReplaySummary summary = replay_stream(events_in, pipeline);
    report.events_applied = summary.applied;
    report.events_dropped = summary.dropped;
    return finish_evaluation(world, config, store, engine, truth, std::move(report));
}

std::string evaluation_csv(const EvaluationReport& report) {
    std::ostringstream out;
    out << "metric,scenario,value\n";
    out << "hitrate,," << report.hitrate.value << "\n";
    out << "evaluated_users,," << report.hitrate.evaluated << "\n";
    out << "empty_truth_warnings,," << report.hitrate.empty_truth << "\n";
    for (const auto& [id, v] : report.pvr_by_scenario) {
        out << "pvr," << id << "," << v << "\n";
    }
    out << "pvr,background," << report.pvr_background << "\n";
    out << "events_applied,," << report.events_applied << "\n";
    out << "events_dropped,," << report.events_dropped << "\n";
    return out.str();
}

std::string evaluation_summary(const EvaluationReport& report) {
    std::ostringstream out;
    out << "events applied: " << report.events_applied
        << " (dropped: " << report.events_dropped << ")\n";
    out << "hitrate: " << report.hitrate.value << " over " << report.hitrate.evaluated
        << " users";
    if (report.hitrate.empty_truth > 0) {
        out << " (" << report.hitrate.empty_truth << " users skipped: empty truth)";
    }
    out << "\n";
    out << "exposure shares (PVR proxy):\n";
    for (const auto& [id, v] : report.pvr_by_scenario) {
        out << "  " << id << ": " << v << "\n";
    }
    out << "  background: " << report.pvr_background << "\n";
    return out.str();
}

}  // namespace mnr::sim
