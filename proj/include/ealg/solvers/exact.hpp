#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "ealg/core.hpp"

namespace ealg {

inline constexpr std::size_t held_karp_max_nodes = 18;

/// Greedy tour from `start`; ties go to the lowest index.
inline std::vector<std::size_t> nearest_neighbor_order(const DistanceMatrix& d, std::size_t start)
{
    const std::size_t n = d.size();
    std::vector<std::size_t> order{start};
    std::vector<bool> used(n, false);
    used[start] = true;
    std::size_t cur = start;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (!used[j] && d(cur, j) < best) {
                best = d(cur, j);
                next = j;
            }
        }
        used[next] = true;
        order.push_back(next);
        cur = next;
    }
    return order;
}

inline Tour nearest_neighbor(const Instance& inst, std::size_t start = 0)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("nearest_neighbor requires a TSP instance");
    if (start >= inst.size()) throw InvalidSolutionError("start node out of range");
    return make_tour(inst, nearest_neighbor_order(distance_matrix(inst), start));
}

/// Exact closed tour by bitmask dynamic programming over subsets of
/// {1..n-1}; the tour is anchored at node 0.
inline Tour held_karp(const Instance& inst)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("held_karp requires a TSP instance");
    const std::size_t n = inst.size();
    if (n > held_karp_max_nodes) throw SizeLimitError("held_karp supports at most 18 nodes, got " + std::to_string(n));
    if (n <= 3) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        return make_tour(inst, std::move(order));
    }
    const DistanceMatrix d = distance_matrix(inst);
    const std::size_t m = n - 1;  // node i+1 <-> bit i
    const std::size_t full = (std::size_t{1} << m) - 1;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost((full + 1) * m, inf);
    std::vector<std::uint8_t> parent((full + 1) * m, 0xff);
    auto at = [m](std::size_t mask, std::size_t j) { return mask * m + j; };

    for (std::size_t j = 0; j < m; ++j) cost[at(std::size_t{1} << j, j)] = d(0, j + 1);
    for (std::size_t mask = 1; mask <= full; ++mask) {
        for (std::size_t j = 0; j < m; ++j) {
            if (!(mask >> j & 1U)) continue;
            const double base = cost[at(mask, j)];
            if (base == inf) continue;
            for (std::size_t k = 0; k < m; ++k) {
                if (mask >> k & 1U) continue;
                const std::size_t next = mask | (std::size_t{1} << k);
                const double c = base + d(j + 1, k + 1);
                if (c < cost[at(next, k)]) {
                    cost[at(next, k)] = c;
                    parent[at(next, k)] = static_cast<std::uint8_t>(j);
                }
            }
        }
    }
    std::size_t last = 0;
    double best = inf;
    for (std::size_t j = 0; j < m; ++j) {
        const double c = cost[at(full, j)] + d(j + 1, 0);
        if (c < best) {
            best = c;
            last = j;
        }
    }
    std::vector<std::size_t> rev;
    std::size_t mask = full;
    std::size_t j = last;
    while (mask) {
        rev.push_back(j + 1);
        const std::size_t prev = parent[at(mask, j)];
        mask &= ~(std::size_t{1} << j);
        j = prev;
    }
    std::vector<std::size_t> order{0};
    order.insert(order.end(), rev.rbegin(), rev.rend());
    return make_tour(inst, std::move(order));
}

} // namespace ealg
