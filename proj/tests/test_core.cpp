#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ealg/core.hpp"
#include "ealg/mutation.hpp"
#include "ealg/rng.hpp"

using namespace ealg;

namespace {

Instance square()
{
    return make_tsp_instance("square", {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
}

Instance random_instance(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {u(g), u(g)};
    return make_tsp_instance("r" + std::to_string(seed), pts);
}

// independent of the library's summation order and distance helper
double naive_cycle(const std::vector<Point>& pts, const std::vector<std::size_t>& order)
{
    double total = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Point a = pts[order[k]], b = pts[order[(k + 1) % order.size()]];
        total += std::hypot(a.x - b.x, a.y - b.y);
    }
    return total;
}

} // namespace

TEST(TourCost, SquarePerimeter) { EXPECT_DOUBLE_EQ(tour_cost(square(), std::vector<std::size_t>{0, 1, 2, 3}), 4.0); }

TEST(TourCost, CrossingSquare)
{
    EXPECT_NEAR(tour_cost(square(), std::vector<std::size_t>{0, 2, 1, 3}), 2.0 + 2.0 * std::sqrt(2.0), 1e-12);
}

TEST(TourCost, MatchesNaiveSummation)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Instance inst = random_instance(5, s);
        std::vector<std::size_t> order{0, 1, 2, 3, 4};
        std::shuffle(order.begin(), order.end(), std::mt19937_64(s + 99));
        EXPECT_NEAR(tour_cost(inst, order), naive_cycle(inst.coords, order), 1e-12);
    }
}

TEST(TourCost, RotationAndReversalAreBitExact)
{
    const Instance inst = random_instance(12, 5);
    std::vector<std::size_t> order(12);
    for (std::size_t i = 0; i < 12; ++i) order[i] = (i * 5) % 12;
    const double base = tour_cost(inst, order);
    for (std::size_t k = 0; k < 12; ++k) {
        auto rot = order;
        std::rotate(rot.begin(), rot.begin() + static_cast<std::ptrdiff_t>(k), rot.end());
        EXPECT_EQ(tour_cost(inst, rot), base);
        std::reverse(rot.begin(), rot.end());
        EXPECT_EQ(tour_cost(inst, rot), base);
    }
}

TEST(TourCost, RejectsNonPermutations)
{
    EXPECT_THROW(tour_cost(square(), std::vector<std::size_t>{0, 1, 1, 3}), InvalidSolutionError);
    EXPECT_THROW(tour_cost(square(), std::vector<std::size_t>{0, 1, 2}), InvalidSolutionError);
    EXPECT_THROW(tour_cost(square(), std::vector<std::size_t>{0, 1, 2, 4}), InvalidSolutionError);
}

TEST(TourCost, RejectsOpInstances)
{
    const Instance op = make_op_instance("op", {{0, 0}, {1, 0}, {0, 1}}, {0, 1, 1}, 3.0);
    EXPECT_THROW(tour_cost(op, std::vector<std::size_t>{0, 1, 2}), TypeError);
}

TEST(DistanceMatrix, ThreeFourFive)
{
    const DistanceMatrix d(std::vector<Point>{{0, 0}, {0.6, 0.8}});
    EXPECT_DOUBLE_EQ(d(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(d(1, 0), 1.0);
    EXPECT_EQ(d(0, 0), 0.0);
}

TEST(DistanceMatrix, MatchesPairwiseLoopAndIsSymmetric)
{
    const Instance inst = random_instance(10, 42);
    const DistanceMatrix d = distance_matrix(inst);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(d(i, i), 0.0);
        for (std::size_t j = 0; j < 10; ++j) {
            const double dx = inst.coords[i].x - inst.coords[j].x, dy = inst.coords[i].y - inst.coords[j].y;
            EXPECT_NEAR(d(i, j), std::hypot(dx, dy), 1e-12);
            EXPECT_EQ(d(i, j), d(j, i));
        }
    }
}

TEST(DistanceMatrix, TriangleInequalityOnSamples)
{
    const DistanceMatrix d = distance_matrix(random_instance(15, 3));
    for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t j = 0; j < 15; ++j)
            for (std::size_t k = 0; k < 15; ++k) EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12);
}

TEST(Instance, ValidationRules)
{
    EXPECT_THROW(make_tsp_instance("x", {{0, 0}}), InstanceError);
    EXPECT_THROW(make_op_instance("x", {{0, 0}, {1, 1}}, {0, 1}, 1.0), InstanceError);
    EXPECT_THROW(make_op_instance("x", {{0, 0}, {1, 1}, {1, 0}}, {1, 1, 1}, 1.0), InstanceError);
    EXPECT_THROW(make_op_instance("x", {{0, 0}, {1, 1}, {1, 0}}, {0, -1, 1}, 1.0), InstanceError);
    EXPECT_THROW(make_op_instance("x", {{0, 0}, {1, 1}, {1, 0}}, {0, 1, 1}, 0.0), InstanceError);
    EXPECT_THROW(make_tsp_instance("x", {{0, 0}, {NAN, 1}}), InstanceError);
    Instance bad = square();
    bad.max_len = 2.0;
    EXPECT_THROW(validate(bad), InstanceError);
}

TEST(Instance, JsonRoundTrip)
{
    const Instance op = make_op_instance("op-1", {{0, 0}, {0.25, 0.5}, {1, 0.125}}, {0, 2, 4}, 2.5);
    const Instance back = instance_from_json(Json::parse(to_json(op).dump()));
    EXPECT_EQ(back, op);
    const Instance tsp = square();
    EXPECT_EQ(instance_from_json(to_json(tsp)), tsp);
}

TEST(Instance, JsonFieldOrderIrrelevantAndUnknownRejected)
{
    const Json j = Json::parse(R"({"coords": [[0,0],[1,0]], "kind": "tsp", "id": "a"})");
    EXPECT_EQ(instance_from_json(j).size(), 2u);
    EXPECT_THROW(instance_from_json(Json::parse(R"({"id":"a","kind":"tsp","coords":[[0,0],[1,0]],"extra":1})")), InstanceError);
    EXPECT_THROW(instance_from_json(Json::parse(R"({"id":"a","kind":"vrp","coords":[[0,0],[1,0]]})")), InstanceError);
    EXPECT_THROW(instance_from_json(Json::parse(R"({"id":"a","kind":"tsp","coords":[[0,0,1],[1,0]]})")), InstanceError);
}

TEST(Instance, ContentHashIgnoresId)
{
    Instance a = square();
    Instance b = square();
    b.id = "other";
    EXPECT_EQ(content_hash(a), content_hash(b));
    b.coords[2].x = 0.5;
    EXPECT_NE(content_hash(a), content_hash(b));
}

TEST(OpRoute, FeasibilityCheck)
{
    const Instance op = make_op_instance("op", {{0, 0}, {1, 0}, {0, 1}}, {0, 1, 1}, 2.0);
    const DistanceMatrix d = distance_matrix(op);
    OpRoute ok{{0, 1, 0}, 0.0, 0.0};
    ok.length = route_length(d, ok.order);
    ok.collected_prize = route_prize(op, ok.order);
    EXPECT_NO_THROW(check_op_route(op, ok));
    EXPECT_EQ(ok.collected_prize, 1.0);

    OpRoute empty{{0}, 0.0, 0.0};
    EXPECT_NO_THROW(check_op_route(op, empty));

    OpRoute too_long{{0, 1, 2, 0}, 0.0, 0.0};
    too_long.length = route_length(d, too_long.order);
    EXPECT_THROW(check_op_route(op, too_long), InvalidSolutionError);

    OpRoute repeated{{0, 1, 1, 0}, 2.0, 0.0};
    EXPECT_THROW(check_op_route(op, repeated), InvalidSolutionError);
}

TEST(Rng, DerivationIsPureAndLabelSensitive)
{
    const SeedValue root{12345};
    EXPECT_EQ(derive_seed(root, "a"), derive_seed(root, "a"));
    EXPECT_NE(derive_seed(root, "a"), derive_seed(root, "b"));
    EXPECT_NE(derive_seed(root, "a"), derive_seed(SeedValue{12346}, "a"));
    EXPECT_EQ(offset_seed(root, 3).value, 12348u);
}

TEST(Rng, AuditRecordsDerivations)
{
    RngAudit audit;
    {
        ScopedRngAudit guard(audit);
        const SeedValue s = derive_seed(root_seed(7, "master"), "x");
        make_rng(s);
    }
    derive_seed(SeedValue{1}, "outside");
    ASSERT_EQ(audit.roots().size(), 1u);
    ASSERT_EQ(audit.derivations().size(), 1u);
    EXPECT_EQ(audit.derivations()[0].parent, 7u);
    EXPECT_EQ(audit.derivations()[0].label, "x");
    ASSERT_EQ(audit.engines().size(), 1u);
    EXPECT_EQ(audit.engines()[0], audit.derivations()[0].child);
}

TEST(Bandit, MultiplicativeRuleAndClamp)
{
    EXPECT_DOUBLE_EQ(bandit_update(1.0, 0.06), 1.2);
    EXPECT_DOUBLE_EQ(bandit_update(1.0, -0.06), 0.8);
    EXPECT_DOUBLE_EQ(bandit_update(1.0, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(bandit_update(3.9, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(bandit_update(0.26, -1.0), 0.25);
}

TEST(Bandit, WeightsDrawOnlyEnabledClass)
{
    enum class E { a, b, c };
    const auto w = MutationWeights<E, 3>::only(E::b);
    Rng rng = make_rng(SeedValue{1});
    for (int i = 0; i < 100; ++i) EXPECT_EQ(w.draw(rng), E::b);
}
