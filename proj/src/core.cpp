#include "mnr/core.hpp"

namespace mnr {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kScored: return "SCORED";
        case Strategy::kFifoOnly: return "FIFO_ONLY";
        case Strategy::kRandom: return "RANDOM";
    }
    return "SCORED";
}

bool parse_strategy(std::string_view name, Strategy& out) {
    if (name == "SCORED") {
        out = Strategy::kScored;
    } else if (name == "FIFO_ONLY") {
        out = Strategy::kFifoOnly;
    } else if (name == "RANDOM") {
        out = Strategy::kRandom;
    } else {
        return false;
    }
    return true;
}

}  // namespace mnr
