#include "mnr/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace mnr::sim {

namespace {

using nlohmann::json;

constexpr double kTwoPi = 6.283185307179586476925286766559;

double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller over the pinned engine.
double normal(Xoshiro256pp& rng) {
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Deterministic per-(user,item) jitter from hashed state: Irwin-Hall sum of
/// four uniforms rescaled to unit variance. Bell-shaped and cheap; this sits
/// on the hottest path (preference lookups).
double jitter_from_hash(std::uint64_t h) {
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        h = splitmix64(h);
        sum += to_unit(h);
    }
    return (sum - 2.0) * 1.7320508075688772;  // sqrt(12/4)
}

double gumbel(Xoshiro256pp& rng) {
    double u = rng.uniform();
    while (u <= 0.0 || u >= 1.0) u = rng.uniform();
    return -std::log(-std::log(u));
}

}  // namespace

WorldSpec parse_world_spec(const json& doc) {
    if (!doc.is_object()) throw std::runtime_error("world spec must be a JSON object");
    WorldSpec spec;
    auto get = [&](const char* field, auto& out) {
        if (auto it = doc.find(field); it != doc.end()) out = it->get<std::decay_t<decltype(out)>>();
    };
    get("seed", spec.seed);
    get("num_users", spec.num_users);
    get("num_items", spec.num_items);
    get("num_categories", spec.num_categories);
    get("horizon_hours", spec.horizon_hours);
    get("eval_cut_fraction", spec.eval_cut_fraction);
    get("drift_per_hour", spec.drift_per_hour);
    get("truth_per_user", spec.truth_per_user);
    get("truth_temperature", spec.truth_temperature);
    get("truth_per_visit", spec.truth_per_visit);
    get("truth_pool_size", spec.truth_pool_size);
    get("homepage_rate_per_hour", spec.homepage_rate_per_hour);
    get("day_hours", spec.day_hours);
    get("background_pool", spec.background_pool);
    get("exposure_k", spec.exposure_k);
    get("quality_weight", spec.quality_weight);
    get("jitter_weight", spec.jitter_weight);

    auto it = doc.find("scenarios");
    if (it == doc.end() || !it->is_array() || it->empty()) {
        throw std::runtime_error("world spec needs a non-empty scenarios array");
    }
    for (const auto& entry : *it) {
        ScenarioWorldSpec s;
        s.scenario_id = entry.at("scenario_id").get<std::string>();
        auto sget = [&](const char* field, auto& out) {
            if (auto f = entry.find(field); f != entry.end())
                out = f->get<std::decay_t<decltype(out)>>();
        };
        sget("visit_rate_per_hour", s.visit_rate_per_hour);
        sget("noise_sigma", s.noise_sigma);
        sget("list_length", s.list_length);
        sget("slice_size", s.slice_size);
        sget("candidates_per_visit", s.candidates_per_visit);
        spec.scenarios.push_back(std::move(s));
    }
    if (spec.num_users < 1 || spec.num_items < 1 || spec.num_categories < 1) {
        throw std::runtime_error("world spec counts must be >= 1");
    }
    for (const auto& s : spec.scenarios) {
        if (s.noise_sigma < 0.0) throw std::runtime_error("noise_sigma must be >= 0");
    }
    if (spec.drift_per_hour < 0.0) throw std::runtime_error("drift_per_hour must be >= 0");
    return spec;
}

WorldSpec load_world_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw std::runtime_error("cannot open world spec '" + path + "'");
    json doc;
    in >> doc;
    return parse_world_spec(doc);
}

json world_spec_to_json(const WorldSpec& spec) {
    json scenarios = json::array();
    for (const auto& s : spec.scenarios) {
        scenarios.push_back({{"scenario_id", s.scenario_id},
                             {"visit_rate_per_hour", s.visit_rate_per_hour},
                             {"noise_sigma", s.noise_sigma},
                             {"list_length", s.list_length},
                             {"slice_size", s.slice_size},
                             {"candidates_per_visit", s.candidates_per_visit}});
    }
    return json{{"seed", spec.seed},
                {"num_users", spec.num_users},
                {"num_items", spec.num_items},
                {"num_categories", spec.num_categories},
                {"horizon_hours", spec.horizon_hours},
                {"eval_cut_fraction", spec.eval_cut_fraction},
                {"drift_per_hour", spec.drift_per_hour},
                {"truth_per_user", spec.truth_per_user},
                {"truth_temperature", spec.truth_temperature},
                {"truth_per_visit", spec.truth_per_visit},
                {"truth_pool_size", spec.truth_pool_size},
                {"homepage_rate_per_hour", spec.homepage_rate_per_hour},
                {"day_hours", spec.day_hours},
                {"background_pool", spec.background_pool},
                {"exposure_k", spec.exposure_k},
                {"quality_weight", spec.quality_weight},
                {"jitter_weight", spec.jitter_weight},
                {"scenarios", std::move(scenarios)}};
}

World::World(WorldSpec spec) : spec_(std::move(spec)) {
    const std::uint32_t items = spec_.num_items;
    const std::uint32_t users = spec_.num_users;
    const std::uint32_t cats = spec_.num_categories;

    Xoshiro256pp item_rng(derive_seed(spec_.seed, "items"));
    category_of_.resize(items);
    quality_.resize(items);
    for (std::uint32_t i = 0; i < items; ++i) {
        category_of_[i] = static_cast<std::uint32_t>(item_rng.bounded(cats));
        quality_[i] = normal(item_rng);
    }

    Xoshiro256pp pref_rng(derive_seed(spec_.seed, "prefs"));
    base_pref_.resize(static_cast<std::size_t>(users) * cats);
    drift_dir_.resize(base_pref_.size());
    for (auto& v : base_pref_) v = normal(pref_rng);
    for (auto& v : drift_dir_) v = normal(pref_rng);

    slices_.resize(spec_.scenarios.size());
    slice_by_cat_.resize(spec_.scenarios.size());
    std::unordered_set<std::uint32_t> universe_set;
    for (std::size_t s = 0; s < spec_.scenarios.size(); ++s) {
        const std::uint32_t slice_size = std::min(spec_.scenarios[s].slice_size, items);
        Xoshiro256pp slice_rng(derive_seed(spec_.seed, "slice", s));
        std::unordered_set<std::uint32_t> chosen;
        while (chosen.size() < slice_size) {
            chosen.insert(static_cast<std::uint32_t>(slice_rng.bounded(items)));
        }
        slices_[s].assign(chosen.begin(), chosen.end());
        std::sort(slices_[s].begin(), slices_[s].end());
        slice_by_cat_[s].resize(cats);
        for (const std::uint32_t item : slices_[s]) {
            slice_by_cat_[s][category_of_[item]].push_back(item);
            universe_set.insert(item);
        }
    }
    universe_.assign(universe_set.begin(), universe_set.end());
    std::sort(universe_.begin(), universe_.end());
}

double World::preference(std::uint32_t user, std::uint32_t item, double t_hours) const {
    const std::uint32_t cat = category_of_[item];
    const std::size_t idx = static_cast<std::size_t>(user) * spec_.num_categories + cat;
    const double cat_pref = base_pref_[idx] + spec_.drift_per_hour * t_hours * drift_dir_[idx];
    const double jitter = jitter_from_hash(derive_seed(spec_.seed, "jitter", user, item));
    return cat_pref + spec_.quality_weight * quality_[item] + spec_.jitter_weight * jitter;
}

std::vector<double> World::poisson_times(double rate_per_hour, double until_hours,
                                         std::uint64_t stream_seed) const {
    std::vector<double> times;
    if (rate_per_hour <= 0.0) return times;
    Xoshiro256pp rng(stream_seed);
    double t = 0.0;
    for (;;) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        t += -std::log(u) / rate_per_hour;
        if (t >= until_hours) break;
        times.push_back(t);
    }
    return times;
}

std::vector<RankLogEvent> World::generate_events() const {
    struct Visit {
        double t_hours;
        std::uint32_t scenario;
        std::uint32_t user;
        std::uint32_t visit_index;
    };
    std::vector<Visit> visits;
    const double cut = spec_.cut_hours();
    for (std::uint32_t s = 0; s < spec_.scenarios.size(); ++s) {
        for (std::uint32_t u = 0; u < spec_.num_users; ++u) {
            const auto times =
                poisson_times(spec_.scenarios[s].visit_rate_per_hour, cut,
                              derive_seed(spec_.seed, "visits", s, u));
            for (std::uint32_t i = 0; i < times.size(); ++i) {
                visits.push_back(Visit{times[i], s, u, i});
            }
        }
    }
    std::sort(visits.begin(), visits.end(), [](const Visit& a, const Visit& b) {
        if (a.t_hours != b.t_hours) return a.t_hours < b.t_hours;
        if (a.scenario != b.scenario) return a.scenario < b.scenario;
        return a.user < b.user;
    });

    std::vector<RankLogEvent> events;
    events.reserve(visits.size());
    std::uint64_t event_seq = 0;
    std::vector<double> cat_weights(spec_.num_categories);

    for (const Visit& visit : visits) {
        const ScenarioWorldSpec& scen = spec_.scenarios[visit.scenario];
        Xoshiro256pp rng(derive_seed(spec_.seed, "visit",
                                     (static_cast<std::uint64_t>(visit.scenario) << 32) |
                                         visit.user,
                                     visit.visit_index));

        // Category-biased candidate sampling: upstream matching would already
        // have narrowed to items near the user's interests.
        double total = 0.0;
        for (std::uint32_t c = 0; c < spec_.num_categories; ++c) {
            const std::size_t idx =
                static_cast<std::size_t>(visit.user) * spec_.num_categories + c;
            const double pref =
                base_pref_[idx] + spec_.drift_per_hour * visit.t_hours * drift_dir_[idx];
            cat_weights[c] = std::exp(pref);
            total += cat_weights[c];
        }

        const auto& slice = slices_[visit.scenario];
        const auto& by_cat = slice_by_cat_[visit.scenario];
        std::unordered_set<std::uint32_t> chosen;
        const std::uint32_t want = scen.candidates_per_visit;
        if (want >= slice.size()) {
            chosen.insert(slice.begin(), slice.end());
        } else {
            const std::uint32_t max_attempts = want * 8;
            for (std::uint32_t attempt = 0; attempt < max_attempts && chosen.size() < want;
                 ++attempt) {
                double pick = rng.uniform() * total;
                std::uint32_t c = 0;
                for (; c + 1 < spec_.num_categories; ++c) {
                    if (pick < cat_weights[c]) break;
                    pick -= cat_weights[c];
                }
                if (by_cat[c].empty()) continue;
                chosen.insert(by_cat[c][rng.bounded(by_cat[c].size())]);
            }
        }

        struct Scored {
            std::uint32_t item;
            double score;
        };
        std::vector<Scored> scored;
        scored.reserve(chosen.size());
        std::vector<std::uint32_t> ordered(chosen.begin(), chosen.end());
        std::sort(ordered.begin(), ordered.end());
        for (const std::uint32_t item : ordered) {
            const double score = preference(visit.user, item, visit.t_hours) +
                                 scen.noise_sigma * normal(rng);
            scored.push_back(Scored{item, score});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.item < b.item;
        });
        if (scored.size() > scen.list_length) scored.resize(scen.list_length);
        if (scored.empty()) continue;

        RankLogEvent event;
        event.event_id = "e" + std::to_string(event_seq++);
        event.user_id = user_id(visit.user);
        event.scenario_id = scen.scenario_id;
        event.access_time = to_epoch_ms(visit.t_hours);
        event.items.reserve(scored.size());
        for (const auto& sc : scored) {
            event.items.push_back(ItemRef{item_id(sc.item), category_id(sc.item), sc.score});
        }
        events.push_back(std::move(event));
    }
    return events;
}

std::vector<std::string> World::truth_from_pool(std::uint32_t user, double t_hours,
                                                std::uint32_t count, std::uint64_t salt,
                                                const std::vector<std::uint32_t>& pool) const {
    Xoshiro256pp rng(derive_seed(spec_.seed, "truth", user, salt));
    struct Keyed {
        std::uint32_t item;
        double key;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(pool.size());
    const double tau = spec_.truth_temperature;
    for (const std::uint32_t item : pool) {
        const double pref = preference(user, item, t_hours);
        const double key = tau > 0.0 ? pref / tau + gumbel(rng) : pref;
        keyed.push_back(Keyed{item, key});
    }
    const std::size_t take = std::min<std::size_t>(count, keyed.size());
    std::partial_sort(keyed.begin(), keyed.begin() + take, keyed.end(),
                      [](const Keyed& a, const Keyed& b) {
                          if (a.key != b.key) return a.key > b.key;
                          return a.item < b.item;
                      });
    std::vector<std::string> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(item_id(keyed[i].item));
    return out;
}

std::vector<std::string> World::truth_at(std::uint32_t user, double t_hours, std::uint32_t count,
                                         std::uint64_t salt) const {
    return truth_from_pool(user, t_hours, count, salt, universe_);
}

std::vector<std::uint32_t> World::top_pref_items(std::uint32_t user, double t_hours,
                                                 std::uint32_t count) const {
    struct Keyed {
        std::uint32_t item;
        double key;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(universe_.size());
    for (const std::uint32_t item : universe_) {
        keyed.push_back(Keyed{item, preference(user, item, t_hours)});
    }
    const std::size_t take = std::min<std::size_t>(count, keyed.size());
    std::partial_sort(keyed.begin(), keyed.begin() + take, keyed.end(),
                      [](const Keyed& a, const Keyed& b) {
                          if (a.key != b.key) return a.key > b.key;
                          return a.item < b.item;
                      });
    std::vector<std::uint32_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(keyed[i].item);
    std::sort(out.begin(), out.end());
    return out;
}

GroundTruth World::ground_truth() const {
    GroundTruth truth;
    const double t_mid = (spec_.cut_hours() + spec_.horizon_hours) / 2.0;
    for (std::uint32_t u = 0; u < spec_.num_users; ++u) {
        truth.items_by_user[user_id(u)] = truth_at(u, t_mid, spec_.truth_per_user, /*salt=*/0);
    }
    return truth;
}

std::vector<HomepageVisit> World::homepage_visits(std::uint32_t user) const {
    const auto times = poisson_times(spec_.homepage_rate_per_hour, spec_.cut_hours(),
                                     derive_seed(spec_.seed, "home", user));
    std::vector<HomepageVisit> visits;
    visits.reserve(times.size());
    for (std::uint32_t i = 0; i < times.size(); ++i) {
        visits.push_back(HomepageVisit{times[i], i});
    }
    return visits;
}

std::vector<std::string> World::background_items(std::uint32_t user) const {
    Xoshiro256pp rng(derive_seed(spec_.seed, "background", user));
    const std::uint32_t want = std::min<std::uint32_t>(
        spec_.background_pool, static_cast<std::uint32_t>(universe_.size()));
    std::unordered_set<std::uint32_t> chosen;
    while (chosen.size() < want) {
        chosen.insert(universe_[rng.bounded(universe_.size())]);
    }
    std::vector<std::uint32_t> ordered(chosen.begin(), chosen.end());
    std::sort(ordered.begin(), ordered.end());
    std::vector<std::string> out;
    out.reserve(ordered.size());
    for (const std::uint32_t item : ordered) out.push_back(item_id(item));
    return out;
}

std::uint32_t World::item_index(const std::string& id) const {
    if (id.empty() || id[0] != 'i') throw std::runtime_error("bad item id '" + id + "'");
    return static_cast<std::uint32_t>(std::stoul(id.substr(1)));
}

std::size_t generate_world_files(const WorldSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    World world(spec);

    std::ofstream events_out(fs::path(out_dir) / "events.ndjson");
    const auto events = world.generate_events();
    for (const auto& event : events) {
        json items = json::array();
        for (const auto& item : event.items) {
            items.push_back({{"item_id", item.item_id},
                             {"category_id", item.category_id},
                             {"score", item.rank_score}});
        }
        events_out << json{{"event_id", event.event_id},
                           {"user_id", event.user_id},
                           {"scenario_id", event.scenario_id},
                           {"access_time", event.access_time},
                           {"items", std::move(items)}}
                          .dump()
                   << '\n';
    }
    events_out.close();

    std::ofstream truth_out(fs::path(out_dir) / "truth.ndjson");
    const GroundTruth truth = world.ground_truth();
    for (const auto& [user, items] : truth.items_by_user) {
        truth_out << json{{"user_id", user}, {"items", items}}.dump() << '\n';
    }
    truth_out.close();

    std::ofstream spec_out(fs::path(out_dir) / "world.json");
    spec_out << world_spec_to_json(spec).dump(2) << '\n';
    return events.size();
}

}  // namespace mnr::sim
