#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ealg/solvers/aco.hpp"
#include "ealg/solvers/exact.hpp"
#include "ealg/solvers/gls.hpp"

using namespace ealg;

namespace {

Instance square() { return make_tsp_instance("square", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

Instance random_tsp(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {u(g), u(g)};
    return make_tsp_instance("t" + std::to_string(seed), pts);
}

Instance random_op(std::size_t n, std::uint64_t seed, double max_len)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(n);
    std::vector<double> prizes(n, 0.0);
    for (auto& p : pts) p = {u(g), u(g)};
    for (std::size_t i = 1; i < n; ++i) prizes[i] = 1.0 + std::floor(u(g) * 9.0);
    return make_op_instance("o" + std::to_string(seed), pts, prizes, max_len);
}

// fixes node 0, enumerates the remaining (n-1)! orders
std::vector<std::size_t> brute_force_order(const Instance& inst)
{
    std::vector<std::size_t> perm(inst.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::size_t> best = perm;
    double best_cost = INFINITY;
    do {
        double c = 0.0;
        for (std::size_t k = 0; k < perm.size(); ++k) {
            const Point a = inst.coords[perm[k]], b = inst.coords[perm[(k + 1) % perm.size()]];
            c += std::hypot(a.x - b.x, a.y - b.y);
        }
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin() + 1, perm.end()));
    return best;
}

// best prize over every ordered subset of customers that fits the budget
double brute_force_op(const Instance& inst)
{
    const std::size_t n = inst.size();
    double best = 0.0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << (n - 1)); ++mask) {
        std::vector<std::size_t> sub;
        for (std::size_t i = 1; i < n; ++i)
            if (mask >> (i - 1) & 1U) sub.push_back(i);
        double prize = 0.0;
        for (std::size_t v : sub) prize += (*inst.prizes)[v];
        if (prize <= best) continue;
        do {
            double len = 0.0;
            std::size_t cur = 0;
            for (std::size_t v : sub) {
                len += std::hypot(inst.coords[cur].x - inst.coords[v].x, inst.coords[cur].y - inst.coords[v].y);
                cur = v;
            }
            len += std::hypot(inst.coords[cur].x - inst.coords[0].x, inst.coords[cur].y - inst.coords[0].y);
            if (len <= *inst.max_len) {
                best = prize;
                break;
            }
        } while (std::next_permutation(sub.begin(), sub.end()));
    }
    return best;
}

bool two_opt_optimal(const DistanceMatrix& d, const std::vector<std::size_t>& t)
{
    const std::size_t n = t.size();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            const double delta = d(t[i], t[j]) + d(t[i + 1], t[(j + 1) % n]) - d(t[i], t[i + 1]) - d(t[j], t[(j + 1) % n]);
            if (delta < -1e-9) return false;
        }
    return true;
}

void expect_valid_route(const Instance& inst, const OpRoute& r)
{
    EXPECT_NO_THROW(check_op_route(inst, r));
    EXPECT_LE(r.length, *inst.max_len + 1e-9);
    EXPECT_EQ(r.order.front(), 0u);
    EXPECT_EQ(r.order.back(), 0u);
}

} // namespace

TEST(NearestNeighbor, Basics)
{
    const Instance line = make_tsp_instance("line", {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
    const Tour t = nearest_neighbor(line, 0);
    EXPECT_EQ(t.order, (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_DOUBLE_EQ(t.length, 6.0);
    EXPECT_DOUBLE_EQ(nearest_neighbor(square(), 0).length, 4.0);
    EXPECT_THROW(nearest_neighbor(square(), 4), InvalidSolutionError);
}

TEST(NearestNeighbor, NeverBeatsHeldKarp)
{
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_tsp(9, s);
        EXPECT_GE(nearest_neighbor(inst).length, held_karp(inst).length - 1e-12);
    }
}

TEST(HeldKarp, SquareAndDegenerate)
{
    EXPECT_DOUBLE_EQ(held_karp(square()).length, 4.0);
    const Instance dup = make_tsp_instance("dup", {{0.2, 0.2}, {0.2, 0.2}, {0.2, 0.2}, {0.8, 0.2}});
    EXPECT_NEAR(held_karp(dup).length, 1.2, 1e-12);
    EXPECT_EQ(held_karp(make_tsp_instance("two", {{0, 0}, {1, 0}})).length, 2.0);
}

TEST(HeldKarp, MatchesBruteForce)
{
    for (std::size_t n = 4; n <= 8; ++n)
        for (std::uint64_t s = 0; s < 30; ++s) {
            const Instance inst = random_tsp(n, 1000 * n + s);
            const Tour hk = held_karp(inst);
            EXPECT_TRUE(is_permutation_of_n(hk.order, n));
            EXPECT_EQ(hk.length, tour_cost(inst, brute_force_order(inst))) << "n=" << n << " seed=" << s;
        }
}

TEST(HeldKarp, Errors)
{
    EXPECT_THROW(held_karp(random_tsp(19, 1)), SizeLimitError);
    EXPECT_THROW(held_karp(make_op_instance("op", {{0, 0}, {1, 0}, {0, 1}}, {0, 1, 1}, 3.0)), TypeError);
}

TEST(Gls, SquareAnySeed)
{
    for (std::uint64_t s = 0; s < 10; ++s) {
        GlsParams p;
        p.seed = SeedValue{s};
        p.budget_ls_iters = 200;
        EXPECT_DOUBLE_EQ(solve_gls(square(), baseline_heuristic(HeuristicTarget::gls_guide), p).cost_or_prize, 4.0);
    }
}

TEST(Gls, MatchesHeldKarpAtTen)
{
    int hits = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_tsp(10, 5000 + s);
        GlsParams p;
        p.seed = SeedValue{s};
        const SolveResult r = solve_gls(inst, baseline_heuristic(HeuristicTarget::gls_guide), p);
        if (r.cost_or_prize <= held_karp(inst).length * (1.0 + 1e-9)) ++hits;
        EXPECT_TRUE(two_opt_optimal(distance_matrix(inst), r.tour().order));
    }
    EXPECT_GE(hits, 95);
}

TEST(Gls, TraceMonotoneAndTourConsistent)
{
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_tsp(20 + s % 30, 7000 + s);
        GlsParams p;
        p.seed = SeedValue{s};
        p.budget_ls_iters = 2000;
        const SolveResult r = solve_gls(inst, baseline_heuristic(HeuristicTarget::gls_guide), p);
        ASSERT_FALSE(r.trace.empty());
        for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k], r.trace[k - 1]);
        EXPECT_EQ(r.trace.back(), r.cost_or_prize);
        EXPECT_TRUE(is_permutation_of_n(r.tour().order, inst.size()));
        EXPECT_NEAR(r.tour().length, tour_cost(inst, r.tour().order), 1e-9);
        EXPECT_TRUE(two_opt_optimal(distance_matrix(inst), r.tour().order));
    }
}

TEST(Gls, DeterministicAndBudgetZero)
{
    const Instance inst = random_tsp(60, 11);
    GlsParams p;
    p.seed = SeedValue{3};
    p.budget_ls_iters = 3000;
    const auto g = baseline_heuristic(HeuristicTarget::gls_guide);
    EXPECT_EQ(to_json(solve_gls(inst, g, p)), to_json(solve_gls(inst, g, p)));
    p.budget_ls_iters = 0;
    const SolveResult r = solve_gls(inst, g, p);
    const DistanceMatrix d = distance_matrix(inst);
    EXPECT_EQ(r.cost_or_prize, tour_cost(d, nearest_neighbor_order(d, r.tour().order.front())));
}

TEST(Gls, Errors)
{
    const Instance op = make_op_instance("op", {{0, 0}, {1, 0}, {0, 1}}, {0, 1, 1}, 3.0);
    EXPECT_THROW(solve_gls(op, baseline_heuristic(HeuristicTarget::gls_guide), GlsParams{}), TypeError);
    EXPECT_THROW(solve_gls(square(), baseline_heuristic(HeuristicTarget::aco_eta_tsp), GlsParams{}), TypeError);
}

TEST(AcoTsp, Square)
{
    AcoParams p;
    p.iterations = 50;
    EXPECT_DOUBLE_EQ(solve_aco_tsp(square(), baseline_heuristic(HeuristicTarget::aco_eta_tsp), p).cost_or_prize, 4.0);
}

TEST(AcoTsp, WithinTwoPercentAtTen)
{
    int hits = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_tsp(10, 9000 + s);
        AcoParams p;
        p.iterations = 200;
        p.seed = SeedValue{s};
        const SolveResult r = solve_aco_tsp(inst, baseline_heuristic(HeuristicTarget::aco_eta_tsp), p);
        if (r.cost_or_prize <= 1.02 * held_karp(inst).length) ++hits;
        for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k], r.trace[k - 1]);
        EXPECT_TRUE(is_permutation_of_n(r.tour().order, 10));
    }
    EXPECT_GE(hits, 90);
}

TEST(AcoTsp, UniformConstructionIsWorse)
{
    double guided = 0.0, blind = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_tsp(20, 300 + s);
        AcoParams p;
        p.iterations = 5;
        p.seed = SeedValue{s};
        guided += solve_aco_tsp(inst, baseline_heuristic(HeuristicTarget::aco_eta_tsp), p).cost_or_prize;
        p.alpha = 0.0;
        p.beta = 0.0;
        blind += solve_aco_tsp(inst, baseline_heuristic(HeuristicTarget::aco_eta_tsp), p).cost_or_prize;
    }
    EXPECT_GT(blind, guided);
}

TEST(AcoTsp, ParameterValidation)
{
    AcoParams p;
    p.rho = 1.0;
    EXPECT_THROW(solve_aco_tsp(square(), baseline_heuristic(HeuristicTarget::aco_eta_tsp), p), InstanceError);
    p.rho = 0.1;
    p.beta = -1.0;
    EXPECT_THROW(solve_aco_tsp(square(), baseline_heuristic(HeuristicTarget::aco_eta_tsp), p), InstanceError);
}

TEST(AcoTsp, GreedyChoiceDeterministic)
{
    const Instance inst = random_tsp(25, 1);
    AcoParams p;
    p.q0 = 0.9;
    p.iterations = 20;
    p.seed = SeedValue{4};
    const auto eta = baseline_heuristic(HeuristicTarget::aco_eta_tsp);
    EXPECT_EQ(to_json(solve_aco_tsp(inst, eta, p)), to_json(solve_aco_tsp(inst, eta, p)));
}

TEST(AcoOp, OnlyDepotReachable)
{
    const Instance op = make_op_instance("far", {{0, 0}, {1, 0}, {0, 1}}, {0, 5, 5}, 1.5);
    AcoParams p;
    p.iterations = 10;
    const SolveResult r = solve_aco_op(op, baseline_heuristic(HeuristicTarget::aco_eta_op), p);
    EXPECT_EQ(r.route().order, (std::vector<std::size_t>{0}));
    EXPECT_EQ(r.cost_or_prize, 0.0);
    EXPECT_EQ(r.route().length, 0.0);
}

TEST(AcoOp, MatchesEnumerationOnFiveNodes)
{
    int hits = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Instance inst = random_op(5, 400 + s, 1.6);
        AcoParams p;
        p.iterations = 200;
        p.seed = SeedValue{s};
        const SolveResult r = solve_aco_op(inst, baseline_heuristic(HeuristicTarget::aco_eta_op), p);
        expect_valid_route(inst, r.route());
        if (r.cost_or_prize == brute_force_op(inst)) ++hits;
    }
    EXPECT_GE(hits, 90);
}

TEST(AcoOp, FeasibilityFuzz)
{
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const std::size_t n = 3 + s % 12;
        const Instance inst = random_op(n, s, 0.3 + static_cast<double>(s % 7) * 0.4);
        AcoParams p;
        p.iterations = 2;
        p.n_ants = 3;
        p.seed = SeedValue{s};
        const SolveResult r = solve_aco_op(inst, baseline_heuristic(HeuristicTarget::aco_eta_op), p);
        expect_valid_route(inst, r.route());
        ASSERT_EQ(r.cost_or_prize, route_prize(inst, r.route().order));
        for (std::size_t k = 1; k < r.trace.size(); ++k) ASSERT_GE(r.trace[k], r.trace[k - 1]);
    }
}

TEST(Solvers, HeldKarpLowerBoundsEverything)
{
    for (std::uint64_t s = 0; s < 40; ++s) {
        const Instance inst = random_tsp(5 + s % 8, 600 + s);
        const double opt = held_karp(inst).length;
        GlsParams gp;
        gp.seed = SeedValue{s};
        gp.budget_ls_iters = 500;
        AcoParams ap;
        ap.iterations = 10;
        ap.seed = SeedValue{s};
        EXPECT_LE(opt, solve_gls(inst, baseline_heuristic(HeuristicTarget::gls_guide), gp).cost_or_prize + 1e-12);
        EXPECT_LE(opt, solve_aco_tsp(inst, baseline_heuristic(HeuristicTarget::aco_eta_tsp), ap).cost_or_prize + 1e-12);
        EXPECT_LE(opt, nearest_neighbor(inst).length + 1e-12);
    }
}

TEST(Solvers, ResultJsonOmitsTimingByDefault)
{
    const SolveResult r = solve_gls(square(), baseline_heuristic(HeuristicTarget::gls_guide), GlsParams{});
    EXPECT_FALSE(to_json(r).contains("wall_ms"));
    EXPECT_TRUE(to_json(r, true).contains("wall_ms"));
}
