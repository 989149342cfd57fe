#include "mnr/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace mnr {

namespace {

using nlohmann::json;

EpochMs system_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

json ack_to_json(const Ack& ack, const std::string& event_id) {
    json doc{{"event_id", event_id}};
    switch (ack.status) {
        case Ack::Status::kApplied: doc["status"] = "applied"; break;
        case Ack::Status::kDuplicate: doc["status"] = "duplicate"; break;
        case Ack::Status::kDropped:
            doc["status"] = "dropped";
            doc["reason"] = ack.reason;
            break;
    }
    return doc;
}

// Hand-rolled writer for the retrieve response: the serving path renders
// straight from the shared set without building a JSON node tree.

void append_json_string(std::string& out, std::string_view s) {
    out.push_back('"');
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

template <typename T>
void append_number(std::string& out, T value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, res.ptr);
}

void append_channel(std::string& out, const std::shared_ptr<const RetrievalSet>& set,
                    std::optional<std::uint32_t> k) {
    out += "{\"items\":[";
    if (set != nullptr) {
        std::size_t limit = set->items.size();
        if (k.has_value()) limit = std::min<std::size_t>(limit, *k);
        for (std::size_t i = 0; i < limit; ++i) {
            const auto& item = set->items[i];
            if (i > 0) out.push_back(',');
            out += "{\"item_id\":";
            append_json_string(out, item.item_id);
            out += ",\"final_score\":";
            append_number(out, item.final_score);
            out += ",\"rank_index\":";
            append_number(out, item.rank_index);
            out += ",\"time_index\":";
            append_number(out, item.time_index);
            out += ",\"category_id\":";
            append_json_string(out, item.category_id);
            out.push_back('}');
        }
    }
    out += "],\"generated_at\":";
    append_number(out, set != nullptr ? set->generated_at : EpochMs{0});
    out.push_back('}');
}

std::atomic<bool> g_shutdown{false};

void handle_signal(int) { g_shutdown.store(true); }

}  // namespace

Service::Service(AppConfig config)
    : config_(std::move(config)),
      engine_(store_, serving_, config_.random_seed),
      pipeline_(config_, store_, &engine_) {}

void Service::register_routes(httplib::Server& server) {
    server.Post("/v1/ingest", [this](const httplib::Request&, httplib::Response& res,
                                     const httplib::ContentReader& reader) {
        std::string pending;
        std::string acks;
        std::size_t offset = 0;
        bool saw_any = false;

        auto process_line = [&](std::string_view line, std::size_t line_offset) {
            if (line.empty()) return;
            saw_any = true;
            ParseResult parsed = parse_event(line, line_offset);
            if (const auto* err = std::get_if<ParseError>(&parsed)) {
                metrics_.events_dropped.fetch_add(1);
                acks += json{{"status", "dropped"},
                             {"reason", "parse_error"},
                             {"field", err->field},
                             {"offset", err->offset},
                             {"message", err->message}}
                            .dump();
                acks += '\n';
                return;
            }
            const auto& event = std::get<RankLogEvent>(parsed);
            const Ack ack = pipeline_.ingest(event);
            switch (ack.status) {
                case Ack::Status::kApplied: metrics_.events_ingested.fetch_add(1); break;
                case Ack::Status::kDuplicate: metrics_.events_duplicate.fetch_add(1); break;
                case Ack::Status::kDropped: metrics_.events_dropped.fetch_add(1); break;
            }
            acks += ack_to_json(ack, event.event_id).dump();
            acks += '\n';
        };

        reader([&](const char* data, std::size_t len) {
            pending.append(data, len);
            std::size_t start = 0;
            for (;;) {
                const std::size_t nl = pending.find('\n', start);
                if (nl == std::string::npos) break;
                process_line(std::string_view(pending).substr(start, nl - start), offset);
                offset += nl - start + 1;
                start = nl + 1;
            }
            pending.erase(0, start);
            return true;
        });
        if (!pending.empty()) {
            process_line(pending, offset);
        }

        if (!saw_any) {
            res.status = 400;
            res.set_content(json{{"error", "empty body"}}.dump(), "application/json");
            return;
        }
        res.set_content(acks, "application/x-ndjson");
    });

    server.Get("/v1/retrieve", [this](const httplib::Request& req, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        if (!req.has_param("user_id") || req.get_param_value("user_id").empty()) {
            res.status = 400;
            res.set_content(json{{"error", "missing user_id"}}.dump(), "application/json");
            return;
        }
        const std::string user_id = req.get_param_value("user_id");

        std::vector<std::string> scenario_ids;
        const std::size_t n = req.get_param_value_count("scenario");
        for (std::size_t i = 0; i < n; ++i) {
            std::string value = req.get_param_value("scenario", i);
            if (value.empty()) continue;
            if (std::find(scenario_ids.begin(), scenario_ids.end(), value) ==
                scenario_ids.end()) {
                scenario_ids.push_back(std::move(value));
            }
        }
        if (scenario_ids.empty()) {
            for (const auto& [id, cfg] : config_.scenarios) scenario_ids.push_back(id);
        }

        std::optional<std::uint32_t> k;
        if (req.has_param("k")) {
            try {
                const long value = std::stol(req.get_param_value("k"));
                if (value < 1) throw std::invalid_argument("k");
                k = static_cast<std::uint32_t>(value);
            } catch (const std::exception&) {
                res.status = 400;
                res.set_content(json{{"error", "invalid k"}}.dump(), "application/json");
                return;
            }
        }

        const auto refs = engine_.retrieve_refs(user_id, scenario_ids);
        std::size_t reserve = 64 + user_id.size();
        for (const auto& [id, set] : refs) {
            reserve += id.size() + 40 + (set != nullptr ? set->items.size() * 96 : 0);
        }
        std::string body;
        body.reserve(reserve);
        body += "{\"user_id\":";
        append_json_string(body, user_id);
        body += ",\"channels\":{";
        bool first = true;
        for (const auto& [scenario_id, set] : refs) {
            if (!first) body.push_back(',');
            first = false;
            append_json_string(body, scenario_id);
            body.push_back(':');
            append_channel(body, set, k);
        }
        body += "}}";
        res.set_content(std::move(body), "application/json");

        metrics_.retrieve_calls.fetch_add(1);
        const auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        metrics_.retrieve_latency_us.observe(static_cast<std::uint64_t>(elapsed));
    });

    server.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(metrics_.render(store_.key_count(), engine_.materializations()),
                        "text/plain; version=0.0.4");
    });

    server.Post("/v1/admin/expire", [this](const httplib::Request& req, httplib::Response& res) {
        std::int64_t ttl_ms = config_.ttl_ms;
        if (!req.body.empty()) {
            const json doc = json::parse(req.body, nullptr, false);
            if (doc.is_discarded() || !doc.is_object()) {
                res.status = 400;
                res.set_content(json{{"error", "invalid JSON body"}}.dump(), "application/json");
                return;
            }
            if (doc.contains("ttl_ms")) {
                if (!doc["ttl_ms"].is_number_integer() || doc["ttl_ms"].get<std::int64_t>() <= 0) {
                    res.status = 400;
                    res.set_content(json{{"error", "invalid ttl_ms"}}.dump(), "application/json");
                    return;
                }
                ttl_ms = doc["ttl_ms"].get<std::int64_t>();
            }
        }
        const std::size_t removed = pipeline_.expire(system_now_ms(), ttl_ms);
        metrics_.expired_keys.fetch_add(removed);
        res.set_content(json{{"removed", removed}}.dump(), "application/json");
    });
}

bool split_listen_addr(const std::string& addr, std::string& host, int& port) {
    const std::size_t colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size()) return false;
    host = addr.substr(0, colon);
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        return false;
    }
    return port > 0 && port < 65536;
}

int run_serve(AppConfig config) {
    Service service(std::move(config));

    const RecoveryStats recovered = service.pipeline().recover();
    if (recovered.frames > 0) {
        std::fprintf(stderr, "mnr: recovered %llu frames (%llu applied, %llu expire sweeps)\n",
                     static_cast<unsigned long long>(recovered.frames),
                     static_cast<unsigned long long>(recovered.applied),
                     static_cast<unsigned long long>(recovered.expires));
    }

    std::string host;
    int port = 0;
    if (!split_listen_addr(service.config().listen_addr, host, port)) {
        std::fprintf(stderr, "mnr: invalid listen address '%s'\n",
                     service.config().listen_addr.c_str());
        return 1;
    }

    httplib::Server server;
    server.set_tcp_nodelay(true);
    service.register_routes(server);

    if (!server.bind_to_port(host, port)) {
        std::fprintf(stderr, "mnr: cannot bind %s:%d\n", host.c_str(), port);
        return 1;
    }

    g_shutdown.store(false);
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::thread watcher([&server] {
        while (!g_shutdown.load()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        server.stop();
    });

    std::fprintf(stderr, "mnr: listening on %s:%d\n", host.c_str(), port);
    std::fflush(stderr);
    server.listen_after_bind();

    g_shutdown.store(true);
    watcher.join();
    service.pipeline().close_log();
    return 0;
}

}  // namespace mnr
