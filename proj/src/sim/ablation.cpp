#include "mnr/sim/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "mnr/ingest.hpp"
#include "mnr/queue_store.hpp"
#include "mnr/retrieval.hpp"
#include "mnr/sim/evaluate.hpp"

namespace mnr::sim {

namespace {

void ingest_all(const std::vector<RankLogEvent>& events, IngestPipeline& pipeline) {
    EpochMs clock = 0;
    pipeline.set_clock([&clock] { return clock; });
    for (const auto& event : events) {
        clock = event.access_time;
        pipeline.ingest(event);
    }
}

void materialize_all(const QueueStore& store, RetrievalEngine& engine, const AppConfig& config,
                     EpochMs now) {
    for (const auto& key : store.keys()) {
        if (const ScenarioConfig* scenario = config.find_scenario(key.scenario_id)) {
            engine.materialize(key.user_id, *scenario, now);
        }
    }
}

std::vector<std::string> scenario_ids_of(const AppConfig& config) {
    std::vector<std::string> ids;
    for (const auto& [id, cfg] : config.scenarios) ids.push_back(id);
    return ids;
}

std::vector<std::string> retrieve_union(const RetrievalEngine& engine, const std::string& user,
                                        const std::vector<std::string>& scenario_ids) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    for (const auto& [id, set] : engine.retrieve(user, scenario_ids, std::nullopt)) {
        for (const auto& cand : set.items) {
            if (seen.insert(cand.item_id).second) out.push_back(cand.item_id);
        }
    }
    return out;
}

/// Cut-based hitrate of the current store under one arm's config.
double eval_arm(const World& world, const QueueStore& store, RetrievalEngine& engine,
                ServingStore& serving, const AppConfig& arm_config, const GroundTruth& truth) {
    serving.clear();
    materialize_all(store, engine, arm_config, world.to_epoch_ms(world.spec().cut_hours()));
    const auto ids = scenario_ids_of(arm_config);
    std::map<std::string, std::vector<std::string>> retrieved;
    for (std::uint32_t u = 0; u < world.spec().num_users; ++u) {
        const std::string user = world.user_id(u);
        retrieved[user] = retrieve_union(engine, user, ids);
    }
    return hitrate(retrieved, truth).value;
}

std::vector<double> run_strategy_seed(const WorldSpec& spec, const AppConfig& base,
                                      std::uint64_t seed) {
    WorldSpec ws = spec;
    ws.seed = seed;
    const World world(ws);
    const GroundTruth truth = world.ground_truth();

    QueueStore store;
    ServingStore serving;
    RetrievalEngine engine(store, serving, seed);
    IngestPipeline pipeline(base, store, &engine);
    pipeline.set_auto_materialize(false);
    ingest_all(world.generate_events(), pipeline);

    std::vector<double> out;
    for (const Strategy strategy :
         {Strategy::kScored, Strategy::kFifoOnly, Strategy::kRandom}) {
        AppConfig arm = base;
        for (auto& [id, cfg] : arm.scenarios) cfg.strategy = strategy;
        out.push_back(eval_arm(world, store, engine, serving, arm, truth));
    }
    return out;
}

std::vector<double> run_alpha_seed(const WorldSpec& spec, const AppConfig& base,
                                   std::uint64_t seed) {
    WorldSpec ws = spec;
    ws.seed = seed;
    const World world(ws);
    const GroundTruth truth = world.ground_truth();

    QueueStore store;
    ServingStore serving;
    RetrievalEngine engine(store, serving, seed);
    IngestPipeline pipeline(base, store, &engine);
    pipeline.set_auto_materialize(false);
    ingest_all(world.generate_events(), pipeline);

    std::vector<double> out;
    for (const double alpha : alpha_sweep_values()) {
        AppConfig arm = base;
        for (auto& [id, cfg] : arm.scenarios) {
            cfg.strategy = Strategy::kScored;
            cfg.scoring.alpha = alpha;
        }
        out.push_back(eval_arm(world, store, engine, serving, arm, truth));
    }
    return out;
}

std::vector<double> run_online_offline_seed(const WorldSpec& spec, const AppConfig& base,
                                            std::uint64_t seed) {
    WorldSpec ws = spec;
    ws.seed = seed;
    const World world(ws);
    const auto events = world.generate_events();
    const auto ids = scenario_ids_of(base);
    const double period = world.spec().batch_period_hours();

    struct EvalPoint {
        double t_hours;
        std::uint32_t user;
        std::uint32_t visit_index;
        std::vector<std::string> truth;
    };
    std::vector<EvalPoint> points;
    for (std::uint32_t u = 0; u < world.spec().num_users; ++u) {
        for (const HomepageVisit& visit : world.homepage_visits(u)) {
            // Both arms are evaluated only after the first batch boundary, so
            // the offline arm measures staleness, not cold start. Truth is
            // drawn over the full universe at the visit's drifted preferences
            // (a restricted pool would bias against the fresher arm).
            if (visit.t_hours < period) continue;
            points.push_back(EvalPoint{
                visit.t_hours, u, visit.visit_index,
                world.truth_at(u, visit.t_hours, world.spec().truth_per_visit,
                               visit.visit_index + 1)});
        }
    }
    std::sort(points.begin(), points.end(), [](const EvalPoint& a, const EvalPoint& b) {
        if (a.t_hours != b.t_hours) return a.t_hours < b.t_hours;
        return a.user < b.user;
    });
    if (points.empty()) return {0.0, 0.0};

    auto visit_hitrate = [&](const RetrievalEngine& engine, const EvalPoint& point) {
        const auto retrieved = retrieve_union(engine, world.user_id(point.user), ids);
        if (retrieved.empty()) return 0.0;
        const std::unordered_set<std::string> truth_set(point.truth.begin(), point.truth.end());
        std::size_t hits = 0;
        for (const auto& item : retrieved) {
            if (truth_set.contains(item)) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(retrieved.size());
    };

    double online_sum = 0.0;
    {
        QueueStore store;
        ServingStore serving;
        RetrievalEngine engine(store, serving, seed);
        IngestPipeline pipeline(base, store, &engine);
        EpochMs clock = 0;
        pipeline.set_clock([&clock] { return clock; });
        std::size_t ei = 0;
        for (const EvalPoint& point : points) {
            const EpochMs point_ms = world.to_epoch_ms(point.t_hours);
            while (ei < events.size() && events[ei].access_time <= point_ms) {
                clock = events[ei].access_time;
                pipeline.ingest(events[ei]);
                ++ei;
            }
            online_sum += visit_hitrate(engine, point);
        }
    }

    double offline_sum = 0.0;
    {
        QueueStore store;
        ServingStore serving;
        RetrievalEngine engine(store, serving, seed);
        IngestPipeline pipeline(base, store, &engine);
        pipeline.set_auto_materialize(false);
        EpochMs clock = 0;
        pipeline.set_clock([&clock] { return clock; });
        std::size_t ei = 0;
        double boundary = period;
        for (const EvalPoint& point : points) {
            while (boundary <= point.t_hours) {
                const EpochMs boundary_ms = world.to_epoch_ms(boundary);
                while (ei < events.size() && events[ei].access_time <= boundary_ms) {
                    clock = events[ei].access_time;
                    pipeline.ingest(events[ei]);
                    ++ei;
                }
                materialize_all(store, engine, base, boundary_ms);
                boundary += period;
            }
            offline_sum += visit_hitrate(engine, point);
        }
    }

    const double n = static_cast<double>(points.size());
    return {online_sum / n, offline_sum / n};
}

std::vector<std::string> arm_names(const std::string& name) {
    if (name == "strategy") return {"SCORED", "FIFO_ONLY", "RANDOM"};
    if (name == "online_offline") return {"online", "offline"};
    if (name == "alpha_sweep") {
        std::vector<std::string> names;
        for (const double alpha : alpha_sweep_values()) {
            std::ostringstream label;
            label << "alpha=" << alpha;
            names.push_back(label.str());
        }
        return names;
    }
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (expected strategy, online_offline or alpha_sweep)");
}

}  // namespace

const std::vector<double>& alpha_sweep_values() {
    static const std::vector<double> values{10.0, 20.0, 50.0, 200.0, 500.0};
    return values;
}

AppConfig default_sim_config(const WorldSpec& spec) {
    AppConfig config;
    config.listen_addr = "127.0.0.1:0";
    for (const auto& scen : spec.scenarios) {
        ScenarioConfig cfg;
        cfg.scenario_id = scen.scenario_id;
        cfg.truncation = scen.list_length;
        cfg.queue_capacity = 8;
        cfg.k = 20;
        cfg.category_cap = 5;
        cfg.scoring = ScoringParams{50.0, 10.0};
        cfg.strategy = Strategy::kScored;
        config.scenarios.emplace(cfg.scenario_id, std::move(cfg));
    }
    return config;
}

AblationReport run_ablation(const std::string& name, const WorldSpec& spec,
                            const AppConfig& config, const std::vector<std::uint64_t>& seeds,
                            unsigned parallelism) {
    if (seeds.empty()) throw std::invalid_argument("at least one seed required");
    const auto names = arm_names(name);

    AblationReport report;
    report.name = name;
    report.seeds = seeds;
    report.underpowered = seeds.size() < 10;
    for (const auto& arm : names) {
        report.arms.push_back(AblationArm{arm, std::vector<double>(seeds.size(), 0.0), 0.0, 0.0});
    }

    auto run_seed = [&](std::uint64_t seed) -> std::vector<double> {
        if (name == "strategy") return run_strategy_seed(spec, config, seed);
        if (name == "online_offline") return run_online_offline_seed(spec, config, seed);
        return run_alpha_seed(spec, config, seed);
    };

    std::atomic<std::size_t> next{0};
    const unsigned workers =
        std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(seeds.size())));
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                const std::vector<double> values = run_seed(seeds[i]);
                for (std::size_t a = 0; a < values.size(); ++a) {
                    report.arms[a].per_seed[i] = values[a];
                }
            }
        });
    }
    for (auto& thread : threads) thread.join();

    for (auto& arm : report.arms) {
        arm.mean = mean(arm.per_seed);
        arm.ci95_half = ci95_half_width(arm.per_seed);
    }

    if (seeds.size() >= 2) {
        report.significance = true;
        auto add_pair = [&](std::size_t a, std::size_t b) {
            report.pairs.push_back(AblationPair{
                report.arms[a].name, report.arms[b].name,
                paired_t_test(report.arms[a].per_seed, report.arms[b].per_seed)});
        };
        if (name == "strategy") {
            add_pair(0, 1);  // SCORED vs FIFO_ONLY
            add_pair(1, 2);  // FIFO_ONLY vs RANDOM
            add_pair(0, 2);  // SCORED vs RANDOM
        } else if (name == "online_offline") {
            add_pair(0, 1);
        } else {
            // Every alpha against the largest (the degradation claim).
            for (std::size_t a = 0; a + 1 < report.arms.size(); ++a) {
                add_pair(a, report.arms.size() - 1);
            }
        }
    }
    return report;
}

std::string ablation_csv(const AblationReport& report) {
    std::ostringstream out;
    out << "section,name,seed,value\n";
    for (const auto& arm : report.arms) {
        for (std::size_t i = 0; i < arm.per_seed.size(); ++i) {
            out << "per_seed," << arm.name << "," << report.seeds[i] << "," << arm.per_seed[i]
                << "\n";
        }
    }
    for (const auto& arm : report.arms) {
        out << "mean," << arm.name << ",," << arm.mean << "\n";
        out << "ci95_half," << arm.name << ",," << arm.ci95_half << "\n";
    }
    for (const auto& pair : report.pairs) {
        const std::string label = pair.a + "_vs_" + pair.b;
        out << "pair_mean_diff," << label << ",," << pair.test.mean_diff << "\n";
        out << "pair_t," << label << ",," << pair.test.t_stat << "\n";
        out << "pair_p," << label << ",," << pair.test.p_value << "\n";
    }
    return out.str();
}

std::string ablation_summary(const AblationReport& report) {
    std::ostringstream out;
    out << report.name << " ablation over " << report.seeds.size() << " seed(s)\n";
    if (report.underpowered) {
        out << "  warning: fewer than 10 seeds; significance is underpowered\n";
    }
    for (const auto& arm : report.arms) {
        out << "  " << arm.name << ": mean hitrate " << arm.mean;
        if (report.seeds.size() >= 2) out << " +/- " << arm.ci95_half << " (95% CI)";
        out << "\n";
    }
    if (!report.significance) {
        out << "  fewer than 2 seeds: raw means only, no significance tests\n";
        return out.str();
    }
    for (const auto& pair : report.pairs) {
        out << "  " << pair.a << " vs " << pair.b << ": diff " << pair.test.mean_diff
            << ", t=" << pair.test.t_stat << ", p=" << pair.test.p_value << "\n";
    }
    return out.str();
}

}  // namespace mnr::sim
