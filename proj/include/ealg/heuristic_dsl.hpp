#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/mutation.hpp"

namespace ealg {

// Heuristic DSL: elementwise/row-wise matrix expressions over instance-derived
// matrices. Interpreting a program yields the guidance matrix a solver uses.

enum class Op {
    // leaves
    dist,
    prize_outer,
    constant,
    // unary
    row_mean,
    row_min,
    row_max,
    rank_row,
    neg,
    abs,
    sqrt,
    exp_clamped,
    log_safe,
    normalize01,
    symmetrize,
    // binary
    add,
    sub,
    mul,
    safe_div,
    min,
    max,
};

inline constexpr int op_count = static_cast<int>(Op::max) + 1;

enum class HeuristicTarget { gls_guide, aco_eta_tsp, aco_eta_op };

struct MatrixExpr {
    Op op = Op::dist;
    double value = 0.0;  // Op::constant only
    std::vector<MatrixExpr> args;

    friend bool operator==(const MatrixExpr&, const MatrixExpr&) = default;
};

struct HeuristicProgram {
    MatrixExpr root;
    HeuristicTarget target = HeuristicTarget::gls_guide;

    friend bool operator==(const HeuristicProgram&, const HeuristicProgram&) = default;
};

namespace heur_limits {
inline constexpr std::size_t max_depth = 10;
inline constexpr std::size_t max_nodes = 96;
inline constexpr double const_bound = 1e3;
inline constexpr double div_floor = 1e-9;
inline constexpr double exp_clamp = 30.0;
inline constexpr double positive_floor = 1e-9;
/// Finite outputs are clamped to +-this before post-processing so shifts and
/// symmetrisation cannot overflow.
inline constexpr double value_bound = 1e100;
} // namespace heur_limits

inline std::size_t arity(Op op) noexcept
{
    if (op <= Op::constant) return 0;
    if (op <= Op::symmetrize) return 1;
    return 2;
}

inline std::string_view to_string(Op op) noexcept
{
    static constexpr std::string_view names[] = {"dist", "prize_outer", "const", "row_mean", "row_min", "row_max", "rank_row",
                                                 "neg",  "abs",         "sqrt",  "exp_clamped", "log_safe", "normalize01", "symmetrize",
                                                 "add",  "sub",         "mul",   "safe_div", "min", "max"};
    return names[static_cast<int>(op)];
}

inline std::optional<Op> op_from_string(std::string_view s) noexcept
{
    for (int i = 0; i < op_count; ++i) {
        if (to_string(static_cast<Op>(i)) == s) return static_cast<Op>(i);
    }
    return std::nullopt;
}

inline std::string_view to_string(HeuristicTarget t) noexcept
{
    switch (t) {
    case HeuristicTarget::gls_guide: return "gls_guide";
    case HeuristicTarget::aco_eta_tsp: return "aco_eta_tsp";
    case HeuristicTarget::aco_eta_op: return "aco_eta_op";
    }
    return "?";
}

inline std::optional<HeuristicTarget> target_from_string(std::string_view s) noexcept
{
    if (s == "gls_guide") return HeuristicTarget::gls_guide;
    if (s == "aco_eta_tsp") return HeuristicTarget::aco_eta_tsp;
    if (s == "aco_eta_op") return HeuristicTarget::aco_eta_op;
    return std::nullopt;
}

inline bool is_aco(HeuristicTarget t) noexcept { return t != HeuristicTarget::gls_guide; }

// ---- construction helpers ------------------------------------------------

namespace expr {
inline MatrixExpr dist() { return {Op::dist, 0.0, {}}; }
inline MatrixExpr prize_outer() { return {Op::prize_outer, 0.0, {}}; }
inline MatrixExpr constant(double c) { return {Op::constant, c, {}}; }
inline MatrixExpr unary(Op op, MatrixExpr a) { return {op, 0.0, {std::move(a)}}; }
inline MatrixExpr binary(Op op, MatrixExpr a, MatrixExpr b) { return {op, 0.0, {std::move(a), std::move(b)}}; }
} // namespace expr

inline std::size_t depth(const MatrixExpr& e)
{
    std::size_t d = 0;
    for (const auto& a : e.args) d = std::max(d, depth(a));
    return d + 1;
}

inline std::size_t node_count(const MatrixExpr& e)
{
    std::size_t c = 1;
    for (const auto& a : e.args) c += node_count(a);
    return c;
}

/// Classic per-target controls: edge length for GLS, 1/d for TSP ants,
/// prize/d for OP ants.
inline HeuristicProgram baseline_heuristic(HeuristicTarget target)
{
    using namespace expr;
    switch (target) {
    case HeuristicTarget::gls_guide: return {dist(), target};
    case HeuristicTarget::aco_eta_tsp: return {binary(Op::safe_div, constant(1.0), dist()), target};
    case HeuristicTarget::aco_eta_op: return {binary(Op::safe_div, prize_outer(), dist()), target};
    }
    return {dist(), target};
}

// ---- validation ----------------------------------------------------------

namespace detail {

inline void validate_expr(const MatrixExpr& e, HeuristicTarget target, const std::string& path)
{
    if (e.args.size() != arity(e.op)) throw ProgramValidationError(path, "wrong argument count for " + std::string(to_string(e.op)));
    if (e.op == Op::prize_outer && target != HeuristicTarget::aco_eta_op) {
        throw ProgramValidationError(path, "prize_outer is only available to aco_eta_op programs");
    }
    if (e.op == Op::constant && (!std::isfinite(e.value) || std::abs(e.value) > heur_limits::const_bound)) {
        throw ProgramValidationError(path, "constant outside [-1000, 1000]");
    }
    for (std::size_t i = 0; i < e.args.size(); ++i) validate_expr(e.args[i], target, path + ".args[" + std::to_string(i) + "]");
}

} // namespace detail

inline void validate(const HeuristicProgram& p)
{
    detail::validate_expr(p.root, p.target, "root");
    if (depth(p.root) > heur_limits::max_depth) throw ProgramValidationError("root", "AST deeper than 10");
    if (node_count(p.root) > heur_limits::max_nodes) throw ProgramValidationError("root", "AST has more than 96 nodes");
}

// ---- JSON ----------------------------------------------------------------

inline Json to_json(const MatrixExpr& e)
{
    Json j = {{"node", std::string(to_string(e.op))}};
    if (e.op == Op::constant) j["value"] = e.value;
    if (!e.args.empty()) {
        Json a = Json::array();
        for (const auto& x : e.args) a.push_back(to_json(x));
        j["args"] = std::move(a);
    }
    return j;
}

inline Json to_json(const HeuristicProgram& p) { return {{"target", std::string(to_string(p.target))}, {"root", to_json(p.root)}}; }

namespace detail {

inline MatrixExpr expr_from_json(const Json& j, const std::string& path)
{
    if (!j.is_object() || !j.contains("node") || !j["node"].is_string()) throw ProgramValidationError(path, "expected {\"node\": ...}");
    const auto op = op_from_string(j["node"].get<std::string>());
    if (!op) throw ProgramValidationError(path, "unknown heuristic node '" + j["node"].get<std::string>() + "'");
    for (const auto& [key, _] : j.items()) {
        if (key != "node" && key != "value" && key != "args") throw ProgramValidationError(path, "unknown field '" + key + "'");
    }
    MatrixExpr e{*op, 0.0, {}};
    if (*op == Op::constant) {
        if (!j.contains("value") || !j["value"].is_number()) throw ProgramValidationError(path, "const requires a numeric value");
        e.value = j["value"].get<double>();
    } else if (j.contains("value")) {
        throw ProgramValidationError(path, "only const nodes carry a value");
    }
    if (j.contains("args")) {
        if (!j["args"].is_array()) throw ProgramValidationError(path, "args must be an array");
        std::size_t i = 0;
        for (const auto& a : j["args"]) e.args.push_back(expr_from_json(a, path + ".args[" + std::to_string(i++) + "]"));
    }
    return e;
}

} // namespace detail

inline HeuristicProgram heuristic_from_json(const Json& j)
{
    if (!j.is_object()) throw ProgramValidationError("$", "heuristic program must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "target" && key != "root") throw ProgramValidationError("$", "unknown field '" + key + "'");
    }
    if (!j.contains("target") || !j["target"].is_string()) throw ProgramValidationError("target", "missing target");
    const auto target = target_from_string(j["target"].get<std::string>());
    if (!target) throw ProgramValidationError("target", "unknown target '" + j["target"].get<std::string>() + "'");
    if (!j.contains("root")) throw ProgramValidationError("$", "missing root");
    HeuristicProgram p{detail::expr_from_json(j["root"], "root"), *target};
    validate(p);
    return p;
}

inline std::uint64_t program_hash(const HeuristicProgram& p) { return fnv1a64(to_json(p).dump()); }

// ---- interpretation ------------------------------------------------------

namespace detail {

struct InterpretContext {
    const DistanceMatrix& dist;
    const std::vector<double>* prizes;
};

template <class F>
SquareMatrix map_unary(SquareMatrix m, F f)
{
    for (double& v : m.values()) v = f(v);
    return m;
}

template <class F>
SquareMatrix map_binary(SquareMatrix a, const SquareMatrix& b, F f)
{
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] = f(av[i], bv[i]);
    return a;
}

/// Row statistics use off-diagonal entries only and broadcast along the row.
template <class Reduce>
SquareMatrix row_reduce(const SquareMatrix& m, Reduce reduce)
{
    const std::size_t n = m.size();
    SquareMatrix out(n);
    std::vector<double> row;
    row.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(m(i, j));
        }
        const double v = reduce(row);
        for (std::size_t j = 0; j < n; ++j) out(i, j) = v;
    }
    return out;
}

inline SquareMatrix rank_rows(const SquareMatrix& m)
{
    const std::size_t n = m.size();
    SquareMatrix out(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // NaN sorts last; ties by column index
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double x = m(i, a);
            const double y = m(i, b);
            if (std::isnan(x)) return false;
            if (std::isnan(y)) return true;
            return x < y;
        });
        for (std::size_t r = 0; r < n; ++r) out(i, idx[r]) = static_cast<double>(r);
    }
    return out;
}

inline SquareMatrix normalize01(SquareMatrix m)
{
    const std::size_t n = m.size();
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && std::isfinite(m(i, j))) {
                lo = std::min(lo, m(i, j));
                hi = std::max(hi, m(i, j));
            }
        }
    }
    const double span = hi - lo;
    if (!(span > 0.0) || !std::isfinite(span)) return SquareMatrix(n, 0.0);
    for (double& v : m.values()) v = (v - lo) / span;
    return m;
}

inline SquareMatrix symmetrize(const SquareMatrix& m)
{
    const std::size_t n = m.size();
    SquareMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = (m(i, j) + m(j, i)) / 2.0;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

inline double safe_div(double a, double b) noexcept
{
    if (std::abs(b) < heur_limits::div_floor) b = std::signbit(b) ? -heur_limits::div_floor : heur_limits::div_floor;
    return a / b;
}

inline SquareMatrix evaluate(const MatrixExpr& e, const InterpretContext& ctx)
{
    const std::size_t n = ctx.dist.size();
    switch (e.op) {
    case Op::dist: return ctx.dist.matrix();
    case Op::prize_outer: {
        SquareMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) m(i, j) = (*ctx.prizes)[j];
        }
        return m;
    }
    case Op::constant: return SquareMatrix(n, e.value);
    case Op::row_mean:
        return row_reduce(evaluate(e.args[0], ctx), [](const std::vector<double>& r) {
            double s = 0.0;
            for (double v : r) s += v;
            return s / static_cast<double>(r.size());
        });
    case Op::row_min:
        return row_reduce(evaluate(e.args[0], ctx), [](const std::vector<double>& r) { return *std::min_element(r.begin(), r.end()); });
    case Op::row_max:
        return row_reduce(evaluate(e.args[0], ctx), [](const std::vector<double>& r) { return *std::max_element(r.begin(), r.end()); });
    case Op::rank_row: return rank_rows(evaluate(e.args[0], ctx));
    case Op::neg: return map_unary(evaluate(e.args[0], ctx), [](double v) { return -v; });
    case Op::abs: return map_unary(evaluate(e.args[0], ctx), [](double v) { return std::abs(v); });
    case Op::sqrt: return map_unary(evaluate(e.args[0], ctx), [](double v) { return std::sqrt(std::abs(v)); });
    case Op::exp_clamped:
        return map_unary(evaluate(e.args[0], ctx), [](double v) { return std::exp(std::clamp(v, -heur_limits::exp_clamp, heur_limits::exp_clamp)); });
    case Op::log_safe: return map_unary(evaluate(e.args[0], ctx), [](double v) { return std::log(1e-9 + std::abs(v)); });
    case Op::normalize01: return normalize01(evaluate(e.args[0], ctx));
    case Op::symmetrize: return symmetrize(evaluate(e.args[0], ctx));
    case Op::add: return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), [](double a, double b) { return a + b; });
    case Op::sub: return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), [](double a, double b) { return a - b; });
    case Op::mul: return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), [](double a, double b) { return a * b; });
    case Op::safe_div: return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), safe_div);
    case Op::min:
        return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), [](double a, double b) { return std::min(a, b); });
    case Op::max:
        return map_binary(evaluate(e.args[0], ctx), evaluate(e.args[1], ctx), [](double a, double b) { return std::max(a, b); });
    }
    return SquareMatrix(n);
}

inline void check_compatible(const HeuristicProgram& p, const Instance& inst)
{
    const bool op_target = p.target == HeuristicTarget::aco_eta_op;
    if (op_target != (inst.kind == ProblemKind::op)) {
        throw TypeError("heuristic target " + std::string(to_string(p.target)) + " cannot run on a " + std::string(to_string(inst.kind)) +
                        " instance");
    }
}

} // namespace detail

/// Guidance matrix for `instance`. Non-finite entries become 0. GLS guides
/// are symmetrised; ACO visibilities are shifted so every off-diagonal entry
/// is at least 1e-9, with the diagonal pinned to 1e-9.
inline SquareMatrix interpret(const HeuristicProgram& program, const Instance& instance, const DistanceMatrix& dist)
{
    detail::check_compatible(program, instance);
    SquareMatrix m = detail::evaluate(program.root, {dist, instance.prizes ? &*instance.prizes : nullptr});
    for (double& v : m.values()) v = std::isfinite(v) ? std::clamp(v, -heur_limits::value_bound, heur_limits::value_bound) : 0.0;

    const std::size_t n = m.size();
    if (!is_aco(program.target)) return detail::symmetrize(m);

    double lo = INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) lo = std::min(lo, m(i, j));
        }
    }
    // the max() guards against absorption when |lo| dwarfs the floor
    const double shift = lo < heur_limits::positive_floor ? heur_limits::positive_floor - lo : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = i == j ? heur_limits::positive_floor : std::max(m(i, j) + shift, heur_limits::positive_floor);
    }
    return m;
}

inline SquareMatrix interpret(const HeuristicProgram& program, const Instance& instance)
{
    validate(program);
    return interpret(program, instance, distance_matrix(instance));
}

// ---- random programs and mutation ----------------------------------------

enum class HeuristicEdit { constant_perturbation, operator_replacement, subtree_regeneration };

inline std::string_view to_string(HeuristicEdit e) noexcept
{
    switch (e) {
    case HeuristicEdit::constant_perturbation: return "constant_perturbation";
    case HeuristicEdit::operator_replacement: return "operator_replacement";
    case HeuristicEdit::subtree_regeneration: return "subtree_regeneration";
    }
    return "?";
}

using HeuristicMutationWeights = MutationWeights<HeuristicEdit, 3>;

namespace detail {

inline MatrixExpr random_leaf_expr(Rng& rng, HeuristicTarget target)
{
    const double u = uniform01(rng);
    if (target == HeuristicTarget::aco_eta_op && u < 0.3) return expr::prize_outer();
    if (u < 0.75) return expr::dist();
    return expr::constant(std::round(uniform(rng, -2.0, 3.0) * 100.0) / 100.0);
}

inline Op random_op_of_arity(Rng& rng, std::size_t a)
{
    if (a == 1) return static_cast<Op>(static_cast<int>(Op::row_mean) + static_cast<int>(uniform_index(rng, 11)));
    return static_cast<Op>(static_cast<int>(Op::add) + static_cast<int>(uniform_index(rng, 6)));
}

/// Grow-method tree of at most `max_depth` levels.
inline MatrixExpr random_expr(Rng& rng, HeuristicTarget target, std::size_t max_depth)
{
    if (max_depth <= 1 || uniform01(rng) < 0.35) return random_leaf_expr(rng, target);
    if (uniform01(rng) < 0.4) {
        const Op op = random_op_of_arity(rng, 1);
        return expr::unary(op, random_expr(rng, target, max_depth - 1));
    }
    const Op op = random_op_of_arity(rng, 2);
    MatrixExpr a = random_expr(rng, target, max_depth - 1);
    MatrixExpr b = random_expr(rng, target, max_depth - 1);
    return expr::binary(op, std::move(a), std::move(b));
}

inline bool uses_dist(const MatrixExpr& e)
{
    if (e.op == Op::dist) return true;
    return std::any_of(e.args.begin(), e.args.end(), uses_dist);
}

struct ExprSite {
    MatrixExpr* node;
    std::size_t level;
};

inline void collect_sites(MatrixExpr& e, std::size_t level, std::vector<ExprSite>& out)
{
    out.push_back({&e, level});
    for (auto& a : e.args) collect_sites(a, level + 1, out);
}

inline double perturb_constant(double c, Rng& rng)
{
    if (c == 0.0) return uniform(rng, -0.3, 0.3);
    return std::clamp(c * (1.0 + uniform(rng, -0.3, 0.3)), -heur_limits::const_bound, heur_limits::const_bound);
}

inline bool edit_constant(HeuristicProgram& p, Rng& rng)
{
    std::vector<ExprSite> sites;
    collect_sites(p.root, 1, sites);
    std::erase_if(sites, [](const ExprSite& s) { return s.node->op != Op::constant; });
    if (sites.empty()) return false;
    MatrixExpr* node = sites[uniform_index(rng, sites.size())].node;
    node->value = perturb_constant(node->value, rng);
    return true;
}

inline bool edit_operator(HeuristicProgram& p, Rng& rng)
{
    std::vector<ExprSite> sites;
    collect_sites(p.root, 1, sites);
    std::erase_if(sites, [](const ExprSite& s) { return arity(s.node->op) == 0; });
    if (sites.empty()) return false;
    MatrixExpr* node = sites[uniform_index(rng, sites.size())].node;
    const std::size_t a = arity(node->op);
    const std::size_t family = a == 1 ? 11 : 6;
    const int first = a == 1 ? static_cast<int>(Op::row_mean) : static_cast<int>(Op::add);
    const int offset = static_cast<int>(node->op) - first;
    const int next = (offset + 1 + static_cast<int>(uniform_index(rng, family - 1))) % static_cast<int>(family);
    node->op = static_cast<Op>(first + next);
    return true;
}

inline bool edit_subtree(HeuristicProgram& p, Rng& rng)
{
    std::vector<ExprSite> sites;
    collect_sites(p.root, 1, sites);
    const ExprSite site = sites[uniform_index(rng, sites.size())];
    const std::size_t room = heur_limits::max_depth - site.level + 1;
    *site.node = random_expr(rng, p.target, std::min<std::size_t>(3, room));
    return true;
}

inline bool apply_heuristic_edit(HeuristicProgram& p, HeuristicEdit e, Rng& rng)
{
    switch (e) {
    case HeuristicEdit::constant_perturbation: return edit_constant(p, rng);
    case HeuristicEdit::operator_replacement: return edit_operator(p, rng);
    case HeuristicEdit::subtree_regeneration: return edit_subtree(p, rng);
    }
    return false;
}

inline bool is_valid(const HeuristicProgram& p)
{
    try {
        validate(p);
        return true;
    } catch (const ProgramValidationError&) {
        return false;
    }
}

} // namespace detail

/// Random program that reads the distance matrix somewhere, used to seed
/// initial populations.
inline HeuristicProgram random_heuristic(SeedValue seed, HeuristicTarget target, std::size_t max_depth = 3)
{
    Rng rng = make_rng(seed);
    for (;;) {
        HeuristicProgram p{detail::random_expr(rng, target, max_depth), target};
        if (detail::uses_dist(p.root)) return p;
    }
}

struct HeuristicMutation {
    HeuristicProgram program;
    HeuristicEdit edit;
};

/// Exactly one AST edit, drawn by `weights`. After 16 failed draws a
/// constant perturbation is forced; programs without constants fall back to
/// regenerating a subtree.
inline HeuristicMutation mutate_heuristic_traced(const HeuristicProgram& program, SeedValue seed, const HeuristicMutationWeights& weights)
{
    validate(program);
    Rng rng = make_rng(seed);
    for (int attempt = 0; attempt < max_mutation_attempts; ++attempt) {
        const HeuristicEdit edit = weights.draw(rng);
        HeuristicProgram child = program;
        if (detail::apply_heuristic_edit(child, edit, rng) && detail::is_valid(child) && !(child == program)) {
            return {std::move(child), edit};
        }
    }
    for (int attempt = 0; attempt < max_mutation_attempts; ++attempt) {
        HeuristicProgram child = program;
        if (detail::edit_constant(child, rng) && detail::is_valid(child) && !(child == program)) {
            return {std::move(child), HeuristicEdit::constant_perturbation};
        }
    }
    for (;;) {
        HeuristicProgram child = program;
        if (detail::edit_subtree(child, rng) && detail::is_valid(child) && !(child == program)) {
            return {std::move(child), HeuristicEdit::subtree_regeneration};
        }
    }
}

inline HeuristicProgram mutate_heuristic(const HeuristicProgram& program, SeedValue seed, const HeuristicMutationWeights& weights)
{
    return mutate_heuristic_traced(program, seed, weights).program;
}

} // namespace ealg
