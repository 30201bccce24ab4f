#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "ealg/core.hpp"

namespace ealg {

struct SolveResult {
    std::variant<Tour, OpRoute> best;
    double cost_or_prize = 0.0;   // tour length (TSP) or collected prize (OP)
    std::vector<double> trace;    // best-so-far value per iteration
    double wall_ms = 0.0;
    std::size_t evaluations = 0;  // local-search steps (GLS) or constructed solutions (ACO)

    const Tour& tour() const { return std::get<Tour>(best); }
    const OpRoute& route() const { return std::get<OpRoute>(best); }
};

/// Serialises a result. Wall-clock time is only included on request so that
/// default output stays byte-reproducible.
inline Json to_json(const SolveResult& r, bool include_timing = false)
{
    Json j;
    if (const auto* t = std::get_if<Tour>(&r.best)) {
        j["tour"] = {{"order", t->order}, {"length", t->length}};
    } else {
        const auto& route = std::get<OpRoute>(r.best);
        j["route"] = {{"order", route.order}, {"length", route.length}, {"collected_prize", route.collected_prize}};
    }
    j["cost_or_prize"] = r.cost_or_prize;
    j["trace"] = r.trace;
    j["evaluations"] = r.evaluations;
    if (include_timing) j["wall_ms"] = r.wall_ms;
    return j;
}

} // namespace ealg
