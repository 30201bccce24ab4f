#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ealg/error.hpp"
#include "ealg/rng.hpp"

namespace ealg {

using Json = nlohmann::json;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double euclidean(Point a, Point b) noexcept
{
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

enum class ProblemKind { tsp, op };

inline std::string_view to_string(ProblemKind k) noexcept { return k == ProblemKind::tsp ? "tsp" : "op"; }

inline ProblemKind problem_kind_from_string(std::string_view s)
{
    if (s == "tsp") return ProblemKind::tsp;
    if (s == "op") return ProblemKind::op;
    throw InstanceError("unknown instance kind '" + std::string(s) + "'");
}

/// Euclidean node set. OP instances carry prizes (depot prize 0) and a route
/// length budget; the depot is always node 0.
struct Instance {
    static constexpr std::size_t depot = 0;

    std::string id;
    ProblemKind kind = ProblemKind::tsp;
    std::vector<Point> coords;
    std::optional<std::vector<double>> prizes;
    std::optional<double> max_len;

    std::size_t size() const noexcept { return coords.size(); }

    friend bool operator==(const Instance&, const Instance&) = default;
};

inline void validate(const Instance& inst)
{
    const std::size_t n = inst.size();
    for (const Point& p : inst.coords) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InstanceError("non-finite coordinate");
    }
    if (inst.kind == ProblemKind::tsp) {
        if (n < 2) throw InstanceError("TSP instance needs at least 2 nodes");
        if (inst.prizes || inst.max_len) throw InstanceError("TSP instance must not carry prizes or max_len");
        return;
    }
    if (n < 3) throw InstanceError("OP instance needs at least 3 nodes");
    if (!inst.prizes || !inst.max_len) throw InstanceError("OP instance requires prizes and max_len");
    if (inst.prizes->size() != n) throw InstanceError("prizes length differs from node count");
    if ((*inst.prizes)[0] != 0.0) throw InstanceError("depot prize must be 0");
    for (double p : *inst.prizes) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InstanceError("prizes must be finite and nonnegative");
    }
    if (!(*inst.max_len > 0.0) || !std::isfinite(*inst.max_len)) throw InstanceError("max_len must be positive");
}

inline Instance make_tsp_instance(std::string id, std::vector<Point> coords)
{
    Instance inst{std::move(id), ProblemKind::tsp, std::move(coords), std::nullopt, std::nullopt};
    validate(inst);
    return inst;
}

inline Instance make_op_instance(std::string id, std::vector<Point> coords, std::vector<double> prizes, double max_len)
{
    Instance inst{std::move(id), ProblemKind::op, std::move(coords), std::move(prizes), max_len};
    validate(inst);
    return inst;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the geometric and prize content (not the id).
inline std::uint64_t content_hash(const Instance& inst)
{
    std::uint64_t h = fnv1a64(to_string(inst.kind));
    auto mix = [&h](double v) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    };
    for (const Point& p : inst.coords) {
        mix(p.x);
        mix(p.y);
    }
    if (inst.prizes) {
        for (double p : *inst.prizes) mix(p);
    }
    if (inst.max_len) mix(*inst.max_len);
    return h;
}

/// Dense row-major n x n matrix.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * n_, n_}; }

    friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// Symmetric pairwise Euclidean distances with a zero diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::span<const Point> pts) : m_(pts.size())
    {
        const std::size_t n = pts.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = euclidean(pts[i], pts[j]);
                m_(i, j) = d;
                m_(j, i) = d;
            }
        }
    }

    std::size_t size() const noexcept { return m_.size(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    const SquareMatrix& matrix() const noexcept { return m_; }

private:
    SquareMatrix m_;
};

inline DistanceMatrix distance_matrix(const Instance& inst) { return DistanceMatrix(inst.coords); }

/// Closed tour: a permutation of 0..n-1 and its Euclidean length.
struct Tour {
    std::vector<std::size_t> order;
    double length = 0.0;
};

/// Depot-anchored OP route. `order` starts and ends at the depot, e.g.
/// `[0, 4, 2, 0]`; the empty route is represented as `[0]`.
struct OpRoute {
    std::vector<std::size_t> order;
    double length = 0.0;
    double collected_prize = 0.0;
};

inline bool is_permutation_of_n(std::span<const std::size_t> order, std::size_t n)
{
    if (order.size() != n) return false;
    std::vector<bool> seen(n, false);
    for (std::size_t v : order) {
        if (v >= n || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

namespace detail {

/// Rotation- and reflection-canonical form: starts at node 0, and the
/// neighbour of 0 with the smaller index comes second.
inline std::vector<std::size_t> canonical_cycle(std::span<const std::size_t> order)
{
    const std::size_t n = order.size();
    const std::size_t start = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());
    std::vector<std::size_t> out(n);
    const bool forward = n < 3 || order[(start + 1) % n] < order[(start + n - 1) % n];
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = forward ? order[(start + k) % n] : order[(start + n - k) % n];
    }
    return out;
}

template <class Dist>
double cycle_length(std::span<const std::size_t> order, Dist&& dist)
{
    const auto canon = canonical_cycle(order);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < canon.size(); ++k) total += dist(canon[k], canon[k + 1]);
    total += dist(canon.back(), canon.front());
    return total;
}

} // namespace detail

/// Closed-tour length. Summation runs over the canonical rotation/orientation,
/// so rotated or reversed orders give bit-identical results.
inline double tour_cost(const Instance& inst, std::span<const std::size_t> order)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("tour_cost requires a TSP instance");
    if (!is_permutation_of_n(order, inst.size())) throw InvalidSolutionError("tour is not a permutation of 0..n-1");
    return detail::cycle_length(order, [&](std::size_t a, std::size_t b) { return euclidean(inst.coords[a], inst.coords[b]); });
}

inline double tour_cost(const DistanceMatrix& d, std::span<const std::size_t> order)
{
    if (!is_permutation_of_n(order, d.size())) throw InvalidSolutionError("tour is not a permutation of 0..n-1");
    return detail::cycle_length(order, [&](std::size_t a, std::size_t b) { return d(a, b); });
}

inline Tour make_tour(const Instance& inst, std::vector<std::size_t> order)
{
    const double len = tour_cost(inst, order);
    return {std::move(order), len};
}

/// Length of an OP route, summed in visiting order.
inline double route_length(const DistanceMatrix& d, std::span<const std::size_t> order)
{
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) total += d(order[k], order[k + 1]);
    return total;
}

inline double route_prize(const Instance& inst, std::span<const std::size_t> order)
{
    double total = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (order[k] != Instance::depot) total += (*inst.prizes)[order[k]];
    }
    return total;
}

/// Throws InvalidSolutionError unless the route is depot-anchored, repeats no
/// customer, and respects the length budget.
inline void check_op_route(const Instance& inst, const OpRoute& route)
{
    if (inst.kind != ProblemKind::op) throw TypeError("OP route checked against a non-OP instance");
    const auto& o = route.order;
    if (o.empty() || o.front() != Instance::depot) throw InvalidSolutionError("route must start at the depot");
    if (o.size() > 1 && o.back() != Instance::depot) throw InvalidSolutionError("route must end at the depot");
    std::vector<bool> seen(inst.size(), false);
    for (std::size_t k = 1; k + 1 < o.size(); ++k) {
        if (o[k] >= inst.size()) throw InvalidSolutionError("route node out of range");
        if (o[k] == Instance::depot || seen[o[k]]) throw InvalidSolutionError("route repeats a node");
        seen[o[k]] = true;
    }
    if (route.length > *inst.max_len + 1e-9) throw InvalidSolutionError("route exceeds max_len");
}

// ---- JSON ----------------------------------------------------------------

inline Json to_json(const Instance& inst)
{
    Json coords = Json::array();
    for (const Point& p : inst.coords) coords.push_back({p.x, p.y});
    Json j = {{"id", inst.id}, {"kind", std::string(to_string(inst.kind))}, {"coords", std::move(coords)}};
    if (inst.prizes) j["prizes"] = *inst.prizes;
    if (inst.max_len) j["max_len"] = *inst.max_len;
    return j;
}

inline Instance instance_from_json(const Json& j)
{
    if (!j.is_object()) throw InstanceError("instance JSON must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "id" && key != "kind" && key != "coords" && key != "prizes" && key != "max_len") {
            throw InstanceError("unknown instance field '" + key + "'");
        }
    }
    try {
        Instance inst;
        inst.id = j.at("id").get<std::string>();
        inst.kind = problem_kind_from_string(j.at("kind").get<std::string>());
        for (const auto& c : j.at("coords")) {
            if (!c.is_array() || c.size() != 2) throw InstanceError("coordinate must be [x, y]");
            inst.coords.push_back({c[0].get<double>(), c[1].get<double>()});
        }
        if (j.contains("prizes")) inst.prizes = j["prizes"].get<std::vector<double>>();
        if (j.contains("max_len")) inst.max_len = j["max_len"].get<double>();
        validate(inst);
        return inst;
    } catch (const Json::exception& e) {
        throw InstanceError(std::string("malformed instance JSON: ") + e.what());
    }
}

} // namespace ealg
