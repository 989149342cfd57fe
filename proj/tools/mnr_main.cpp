#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mnr/config.hpp"
#include "mnr/ingest.hpp"
#include "mnr/service.hpp"
#include "mnr/sim/ablation.hpp"
#include "mnr/sim/evaluate.hpp"
#include "mnr/sim/world.hpp"

namespace {

using nlohmann::json;

std::string resolve_config_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("MNR_CONFIG"); env != nullptr && *env != '\0') {
        return env;
    }
    throw mnr::ConfigError("$", "no config: pass --config or set MNR_CONFIG");
}

int cmd_replay(const std::string& config_path, const std::string& input, double pace) {
    const mnr::AppConfig config = mnr::load_config(config_path);
    mnr::Service service(config);
    service.pipeline().recover();

    mnr::ReplaySummary summary;
    if (input == "-") {
        summary = mnr::replay_stream(std::cin, service.pipeline(), pace);
    } else {
        std::ifstream in(input);
        if (!in.is_open()) {
            std::fprintf(stderr, "mnr: cannot open input '%s'\n", input.c_str());
            return 1;
        }
        summary = mnr::replay_stream(in, service.pipeline(), pace);
    }
    service.pipeline().close_log();

    std::cout << json{{"lines", summary.lines},
                      {"applied", summary.applied},
                      {"duplicate", summary.duplicate},
                      {"dropped", summary.dropped},
                      {"parse_errors", summary.parse_errors},
                      {"queue_keys", service.store().key_count()},
                      {"materializations", service.engine().materializations()}}
                     .dump()
              << std::endl;
    return 0;
}

int cmd_evaluate(const std::string& world_dir, const std::string& config_path,
                 const std::string& report_path) {
    mnr::AppConfig config;
    if (!config_path.empty()) {
        config = mnr::load_config(config_path);
    } else {
        config = mnr::sim::default_sim_config(mnr::sim::load_world_spec(world_dir + "/world.json"));
    }
    const auto report = mnr::sim::evaluate_world_dir(world_dir, config);

    std::ofstream out(report_path);
    if (!out.is_open()) {
        std::fprintf(stderr, "mnr: cannot write report '%s'\n", report_path.c_str());
        return 1;
    }
    out << mnr::sim::evaluation_csv(report);
    std::cout << mnr::sim::evaluation_summary(report);
    return 0;
}

int cmd_ablation(const std::string& name, const std::string& spec_path,
                 const std::string& config_path, unsigned seeds, unsigned jobs,
                 const std::string& report_path) {
    const mnr::sim::WorldSpec spec = mnr::sim::load_world_spec(spec_path);
    const mnr::AppConfig config = config_path.empty() ? mnr::sim::default_sim_config(spec)
                                                      : mnr::load_config(config_path);
    std::vector<std::uint64_t> seed_list(seeds);
    std::iota(seed_list.begin(), seed_list.end(), 1);

    const auto report = mnr::sim::run_ablation(name, spec, config, seed_list, jobs);
    std::ofstream out(report_path);
    if (!out.is_open()) {
        std::fprintf(stderr, "mnr: cannot write report '%s'\n", report_path.c_str());
        return 1;
    }
    out << mnr::sim::ablation_csv(report);
    std::cout << mnr::sim::ablation_summary(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nearline retrieval engine"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    serve->add_option("--config", config_path, "config JSON (or MNR_CONFIG)");

    std::string replay_config;
    std::string replay_input = "-";
    std::string speed;
    bool afap = false;
    auto* replay = app.add_subcommand("replay", "replay an NDJSON event log");
    replay->add_option("--config", replay_config, "config JSON (or MNR_CONFIG)");
    replay->add_option("--input", replay_input, "event file, or - for stdin");
    replay->add_option("--speed", speed, "pace factor, e.g. x10");
    replay->add_flag("--as-fast-as-possible", afap, "no pacing (default)");

    std::string spec_path;
    std::string out_dir;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic world");
    simulate->add_option("--spec", spec_path, "world spec JSON")->required();
    simulate->add_option("--out", out_dir, "output directory")->required();

    std::string world_dir;
    std::string eval_config;
    std::string eval_report;
    auto* evaluate = app.add_subcommand("evaluate", "replay a world and score it");
    evaluate->add_option("--world", world_dir, "directory from simulate")->required();
    evaluate->add_option("--config", eval_config, "engine config (default: derived)");
    evaluate->add_option("--report", eval_report, "CSV report path")->required();

    std::string ablation_name;
    std::string ablation_spec;
    std::string ablation_config;
    std::string ablation_report;
    unsigned ablation_seeds = 20;
    unsigned ablation_jobs = 2;
    auto* ablation = app.add_subcommand("ablation", "run a paired-seed experiment");
    ablation->add_option("--name", ablation_name, "strategy | online_offline | alpha_sweep")
        ->required();
    ablation->add_option("--spec", ablation_spec, "world spec JSON")->required();
    ablation->add_option("--config", ablation_config, "engine config (default: derived)");
    ablation->add_option("--seeds", ablation_seeds, "number of seeds");
    ablation->add_option("--jobs", ablation_jobs, "parallel seed runs");
    ablation->add_option("--report", ablation_report, "CSV report path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed()) {
            return mnr::run_serve(mnr::load_config(resolve_config_path(config_path)));
        }
        if (replay->parsed()) {
            double pace = 0.0;
            if (!speed.empty() && !afap) {
                if (speed.size() < 2 || speed[0] != 'x') {
                    std::fprintf(stderr, "mnr: --speed expects xN (e.g. x10)\n");
                    return 2;
                }
                pace = std::stod(speed.substr(1));
                if (pace <= 0.0) {
                    std::fprintf(stderr, "mnr: --speed must be positive\n");
                    return 2;
                }
            }
            return cmd_replay(resolve_config_path(replay_config), replay_input, pace);
        }
        if (simulate->parsed()) {
            const auto spec = mnr::sim::load_world_spec(spec_path);
            const std::size_t events = mnr::sim::generate_world_files(spec, out_dir);
            std::cout << json{{"events", events}, {"out", out_dir}}.dump() << std::endl;
            return 0;
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(world_dir, eval_config, eval_report);
        }
        if (ablation->parsed()) {
            return cmd_ablation(ablation_name, ablation_spec, ablation_config, ablation_seeds,
                                ablation_jobs, ablation_report);
        }
    } catch (const mnr::ConfigError& e) {
        std::fprintf(stderr, "mnr: config error at %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mnr: %s\n", e.what());
        return 1;
    }
    return 0;
}
