#pragma once

#include <memory>
#include <string>

#include "mnr/config.hpp"
#include "mnr/ingest.hpp"
#include "mnr/metrics.hpp"
#include "mnr/queue_store.hpp"
#include "mnr/retrieval.hpp"

namespace httplib {
class Server;
}

namespace mnr {

/// Everything one process instance owns, wired together. Construction does
/// not touch the network or the log; call pipeline.recover() before serving.
class Service {
public:
    explicit Service(AppConfig config);

    AppConfig& config() { return config_; }
    QueueStore& store() { return store_; }
    ServingStore& serving() { return serving_; }
    RetrievalEngine& engine() { return engine_; }
    IngestPipeline& pipeline() { return pipeline_; }
    Metrics& metrics() { return metrics_; }

    /// Registers /v1/* routes on the given server.
    void register_routes(httplib::Server& server);

private:
    AppConfig config_;
    QueueStore store_;
    ServingStore serving_;
    RetrievalEngine engine_;
    IngestPipeline pipeline_;
    Metrics metrics_;
};

/// Splits "host:port". Returns false on malformed input.
bool split_listen_addr(const std::string& addr, std::string& host, int& port);

/// Recovery, bind, serve until SIGINT/SIGTERM, flush log. Returns the process
/// exit code (0 ok, 1 bind failure).
int run_serve(AppConfig config);

}  // namespace mnr
