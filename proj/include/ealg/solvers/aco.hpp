#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/heuristic_dsl.hpp"
#include "ealg/solvers/exact.hpp"
#include "ealg/solvers/gls.hpp"
#include "ealg/solvers/result.hpp"

namespace ealg {

struct AcoParams {
    std::size_t n_ants = 0;  // 0 -> min(n, 30)
    std::size_t iterations = 100;
    double alpha = 1.0;
    double beta = 2.0;
    double rho = 0.1;
    double q0 = 0.0;
    SeedValue seed{};
};

inline constexpr double pheromone_min = 1e-9;
inline constexpr double pheromone_max = 1e9;

namespace detail {

inline void check_aco_params(const AcoParams& p)
{
    if (!(p.rho > 0.0 && p.rho < 1.0)) throw InstanceError("rho must lie in (0, 1)");
    if (!(p.alpha >= 0.0) || !(p.beta >= 0.0)) throw InstanceError("ACO exponents must be nonnegative");
    if (!(p.q0 >= 0.0 && p.q0 <= 1.0)) throw InstanceError("q0 must lie in [0, 1]");
}

inline std::size_t ant_count(const AcoParams& p, std::size_t n) { return p.n_ants ? p.n_ants : std::min<std::size_t>(n, 30); }

/// pow(x, e) with the common exponents short-circuited.
inline double fast_pow(double x, double e)
{
    if (e == 0.0) return 1.0;
    if (e == 1.0) return x;
    if (e == 2.0) return x * x;
    return std::pow(x, e);
}

/// Colony state shared by the TSP and OP variants: pheromone matrix plus the
/// per-edge attractiveness tau^alpha * eta^beta, refreshed after every update.
class Colony {
public:
    Colony(const SquareMatrix& eta, const AcoParams& p, double tau0)
        : n_(eta.size()), p_(p), tau_(n_, tau0), eta_pow_(n_), weight_(n_)
    {
        double hi = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (i != j) hi = std::max(hi, eta(i, j));
        // eta is rescaled to (0, 1] so that beta acts on a unit-free quantity
        const double scale = hi > 0.0 && std::isfinite(hi) ? hi : 1.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) eta_pow_(i, j) = fast_pow(eta(i, j) / scale, p_.beta);
        clamp_and_refresh();
    }

    double weight(std::size_t i, std::size_t j) const { return weight_(i, j); }
    double tau(std::size_t i, std::size_t j) const { return tau_(i, j); }

    /// Picks the next node among `cand` (ascending indices).
    std::size_t choose(std::size_t cur, const std::vector<std::size_t>& cand, Rng& rng) const
    {
        if (p_.q0 > 0.0 && uniform01(rng) < p_.q0) return argmax(cur, cand);
        double total = 0.0;
        for (std::size_t j : cand) total += weight_(cur, j);
        if (!(total > 0.0) || !std::isfinite(total)) return argmax(cur, cand);
        const double r = uniform01(rng) * total;
        double acc = 0.0;
        for (std::size_t j : cand) {
            acc += weight_(cur, j);
            if (r < acc) return j;
        }
        return cand.back();
    }

    void evaporate()
    {
        for (double& t : tau_.values()) t *= 1.0 - p_.rho;
    }

    /// Adds `amount` on every edge of `path`; `closed` adds the wrap-around edge.
    void deposit(const std::vector<std::size_t>& path, bool closed, double amount)
    {
        const std::size_t m = path.size();
        for (std::size_t k = 0; k + 1 < m; ++k) add(path[k], path[k + 1], amount);
        if (closed && m > 1) add(path.back(), path.front(), amount);
    }

    void refresh() { clamp_and_refresh(); }

private:
    std::size_t argmax(std::size_t cur, const std::vector<std::size_t>& cand) const
    {
        std::size_t best = cand.front();
        for (std::size_t j : cand)
            if (weight_(cur, j) > weight_(cur, best)) best = j;
        return best;
    }

    void add(std::size_t i, std::size_t j, double v)
    {
        tau_(i, j) += v;
        tau_(j, i) += v;
    }

    void clamp_and_refresh()
    {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                double& t = tau_(i, j);
                t = std::clamp(t, pheromone_min, pheromone_max);
                weight_(i, j) = fast_pow(t, p_.alpha) * eta_pow_(i, j);
            }
        }
    }

    std::size_t n_;
    AcoParams p_;
    SquareMatrix tau_;
    SquareMatrix eta_pow_;
    SquareMatrix weight_;
};

} // namespace detail

inline SolveResult solve_aco_tsp(const Instance& inst, const DistanceMatrix& d, const SquareMatrix& eta, const AcoParams& params)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("solve_aco_tsp requires a TSP instance");
    detail::check_aco_params(params);
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = inst.size();
    const double l_nn = tour_cost(d, nearest_neighbor_order(d, 0));
    detail::Colony colony(eta, params, l_nn > 0.0 ? 1.0 / (static_cast<double>(n) * l_nn) : 1.0);
    Rng rng = make_rng(params.seed);
    const std::size_t ants = detail::ant_count(params, n);

    SolveResult res;
    std::vector<std::size_t> best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> cand;
    std::vector<bool> used(n);
    std::vector<std::vector<std::size_t>> tours(ants);
    std::vector<double> lengths(ants);
    for (std::size_t it = 0; it < params.iterations; ++it) {
        for (std::size_t a = 0; a < ants; ++a) {
            std::fill(used.begin(), used.end(), false);
            std::vector<std::size_t>& order = tours[a];
            order.assign(1, uniform_index(rng, n));
            used[order[0]] = true;
            while (order.size() < n) {
                cand.clear();
                for (std::size_t j = 0; j < n; ++j)
                    if (!used[j]) cand.push_back(j);
                const std::size_t next = colony.choose(order.back(), cand, rng);
                used[next] = true;
                order.push_back(next);
            }
            ++res.evaluations;
            lengths[a] = tour_cost(d, order);
            if (lengths[a] < best_cost) {
                best_cost = lengths[a];
                best = order;
            }
        }
        // every ant deposits 1/L_k, then the elitist 1/L_best on the best-so-far tour
        colony.evaporate();
        for (std::size_t a = 0; a < ants; ++a)
            if (lengths[a] > 0.0) colony.deposit(tours[a], true, 1.0 / lengths[a]);
        if (best_cost > 0.0) colony.deposit(best, true, 1.0 / best_cost);
        colony.refresh();
        res.trace.push_back(best_cost);
    }
    if (best.empty()) {
        best = nearest_neighbor_order(d, 0);
        best_cost = l_nn;
        res.trace.push_back(best_cost);
    }
    res.best = Tour{std::move(best), best_cost};
    res.cost_or_prize = best_cost;
    res.wall_ms = detail::elapsed_ms(t0);
    return res;
}

inline SolveResult solve_aco_tsp(const Instance& inst, const HeuristicProgram& eta, const AcoParams& params)
{
    if (eta.target != HeuristicTarget::aco_eta_tsp) throw TypeError("solve_aco_tsp requires an aco_eta_tsp program");
    const DistanceMatrix d = distance_matrix(inst);
    return solve_aco_tsp(inst, d, interpret(eta, inst, d), params);
}

namespace detail {

inline bool op_feasible(const DistanceMatrix& d, double len, std::size_t cur, std::size_t j, double max_len)
{
    return len + d(cur, j) + d(j, Instance::depot) <= max_len;
}

/// Greedy nearest-feasible route from the depot; its prize normalises the
/// pheromone deposit.
inline std::vector<std::size_t> op_greedy_route(const Instance& inst, const DistanceMatrix& d)
{
    const std::size_t n = inst.size();
    std::vector<bool> used(n, false);
    used[0] = true;
    std::vector<std::size_t> order{0};
    double len = 0.0;
    for (;;) {
        const std::size_t cur = order.back();
        std::size_t next = n;
        for (std::size_t j = 1; j < n; ++j) {
            if (used[j] || !op_feasible(d, len, cur, j, *inst.max_len)) continue;
            if (next == n || d(cur, j) < d(cur, next)) next = j;
        }
        if (next == n) break;
        len += d(cur, next);
        used[next] = true;
        order.push_back(next);
    }
    if (order.size() > 1) order.push_back(0);
    return order;
}

} // namespace detail

inline SolveResult solve_aco_op(const Instance& inst, const DistanceMatrix& d, const SquareMatrix& eta, const AcoParams& params)
{
    if (inst.kind != ProblemKind::op) throw TypeError("solve_aco_op requires an OP instance");
    detail::check_aco_params(params);
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = inst.size();
    const double max_len = *inst.max_len;
    const double prize_nn = route_prize(inst, detail::op_greedy_route(inst, d));
    detail::Colony colony(eta, params, 1.0 / static_cast<double>(n));
    Rng rng = make_rng(params.seed);
    const std::size_t ants = detail::ant_count(params, n);

    SolveResult res;
    std::vector<std::size_t> best{0};
    double best_prize = 0.0;
    std::vector<std::size_t> cand;
    std::vector<bool> used(n);
    std::vector<std::vector<std::size_t>> routes(ants);
    std::vector<double> prizes(ants);
    const double norm = prize_nn > 0.0 ? prize_nn : 1.0;
    for (std::size_t it = 0; it < params.iterations; ++it) {
        for (std::size_t a = 0; a < ants; ++a) {
            std::fill(used.begin(), used.end(), false);
            used[0] = true;
            std::vector<std::size_t>& order = routes[a];
            order.assign(1, 0);
            double len = 0.0;
            double prize = 0.0;
            for (;;) {
                const std::size_t cur = order.back();
                cand.clear();
                for (std::size_t j = 1; j < n; ++j)
                    if (!used[j] && detail::op_feasible(d, len, cur, j, max_len)) cand.push_back(j);
                if (cand.empty()) break;
                const std::size_t next = colony.choose(cur, cand, rng);
                len += d(cur, next);
                prize += (*inst.prizes)[next];
                used[next] = true;
                order.push_back(next);
            }
            if (order.size() > 1) order.push_back(0);
            ++res.evaluations;
            prizes[a] = prize;
            if (prize > best_prize) {
                best_prize = prize;
                best = order;
            }
        }
        colony.evaporate();
        for (std::size_t a = 0; a < ants; ++a) colony.deposit(routes[a], false, prizes[a] / norm);
        colony.deposit(best, false, best_prize / norm);
        colony.refresh();
        res.trace.push_back(best_prize);
    }
    if (res.trace.empty()) res.trace.push_back(0.0);
    OpRoute route{best, route_length(d, best), route_prize(inst, best)};
    res.cost_or_prize = route.collected_prize;
    res.best = std::move(route);
    res.wall_ms = detail::elapsed_ms(t0);
    return res;
}

inline SolveResult solve_aco_op(const Instance& inst, const HeuristicProgram& eta, const AcoParams& params)
{
    if (eta.target != HeuristicTarget::aco_eta_op) throw TypeError("solve_aco_op requires an aco_eta_op program");
    const DistanceMatrix d = distance_matrix(inst);
    return solve_aco_op(inst, d, interpret(eta, inst, d), params);
}

} // namespace ealg
