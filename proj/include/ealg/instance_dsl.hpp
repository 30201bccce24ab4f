#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/mutation.hpp"

namespace ealg {

// Instance generator DSL. A program is an AST over spatial sampling
// primitives; every point is drawn independently by walking the tree.

enum class GenKind { uniform_square, gaussian_clusters, ring, spiral, grid, mix, transform, perturb };

struct ParamSpec {
    std::string_view name;
    double lo;
    double hi;
    bool integer = false;
};

struct GeneratorNode {
    GenKind kind = GenKind::uniform_square;
    std::vector<double> params;  // kind-specific, see `param_specs`; mix: one weight per child
    std::vector<GeneratorNode> children;

    friend bool operator==(const GeneratorNode&, const GeneratorNode&) = default;
};

enum class PrizeRuleKind { uniform, distance_from_depot, cluster_bonus };

struct PrizeRule {
    PrizeRuleKind kind = PrizeRuleKind::uniform;
    double scale = 1.0;

    friend bool operator==(const PrizeRule&, const PrizeRule&) = default;
};

/// max_len = factor * sqrt(n)
struct BudgetRule {
    double factor = 0.5;

    friend bool operator==(const BudgetRule&, const BudgetRule&) = default;
};

struct GeneratorProgram {
    static constexpr int current_version = 1;

    GeneratorNode root;
    int version = current_version;
    std::optional<PrizeRule> prize_rule;    // OP only; defaults apply when absent
    std::optional<BudgetRule> budget_rule;  // OP only; defaults apply when absent

    friend bool operator==(const GeneratorProgram&, const GeneratorProgram&) = default;
};

namespace gen_limits {
inline constexpr std::size_t max_depth = 8;
inline constexpr std::size_t max_nodes = 64;
inline constexpr std::size_t mix_min_children = 2;
inline constexpr std::size_t mix_max_children = 5;
inline constexpr ParamSpec mix_weight{"weight", 1e-3, 100.0};
inline constexpr double min_abs_det = 0.05;
inline constexpr ParamSpec prize_scale{"scale", 0.1, 10.0};
inline constexpr ParamSpec budget_factor{"factor", 0.5, 4.0};
inline constexpr std::size_t min_points = 4;
inline constexpr std::size_t max_points = 10000;
} // namespace gen_limits

inline std::span<const ParamSpec> param_specs(GenKind k) noexcept
{
    static constexpr ParamSpec clusters[] = {{"k", 1, 16, true}, {"spread", 1e-3, 0.5}};
    static constexpr ParamSpec ring[] = {{"radius", 0.01, 0.5}, {"jitter", 0.0, 0.25}};
    static constexpr ParamSpec spiral[] = {{"turns", 0.5, 6.0}, {"jitter", 0.0, 0.25}};
    static constexpr ParamSpec grid[] = {{"jitter", 0.0, 0.25}};
    static constexpr ParamSpec transform[] = {{"a", -2, 2}, {"b", -2, 2}, {"c", -2, 2}, {"d", -2, 2}, {"tx", -1, 1}, {"ty", -1, 1}};
    static constexpr ParamSpec perturb[] = {{"sigma", 0.0, 0.2}};
    switch (k) {
    case GenKind::gaussian_clusters: return clusters;
    case GenKind::ring: return ring;
    case GenKind::spiral: return spiral;
    case GenKind::grid: return grid;
    case GenKind::transform: return transform;
    case GenKind::perturb: return perturb;
    case GenKind::uniform_square:
    case GenKind::mix: break;
    }
    return {};
}

inline std::string_view to_string(GenKind k) noexcept
{
    switch (k) {
    case GenKind::uniform_square: return "uniform_square";
    case GenKind::gaussian_clusters: return "gaussian_clusters";
    case GenKind::ring: return "ring";
    case GenKind::spiral: return "spiral";
    case GenKind::grid: return "grid";
    case GenKind::mix: return "mix";
    case GenKind::transform: return "transform";
    case GenKind::perturb: return "perturb";
    }
    return "?";
}

inline std::optional<GenKind> gen_kind_from_string(std::string_view s) noexcept
{
    for (int i = 0; i <= static_cast<int>(GenKind::perturb); ++i) {
        if (to_string(static_cast<GenKind>(i)) == s) return static_cast<GenKind>(i);
    }
    return std::nullopt;
}

inline std::string_view to_string(PrizeRuleKind k) noexcept
{
    switch (k) {
    case PrizeRuleKind::uniform: return "uniform";
    case PrizeRuleKind::distance_from_depot: return "distance_from_depot";
    case PrizeRuleKind::cluster_bonus: return "cluster_bonus";
    }
    return "?";
}

inline bool is_leaf(GenKind k) noexcept { return k != GenKind::mix && k != GenKind::transform && k != GenKind::perturb; }

// ---- construction helpers ------------------------------------------------

inline GeneratorNode uniform_square() { return {GenKind::uniform_square, {}, {}}; }
inline GeneratorNode gaussian_clusters(int k, double spread) { return {GenKind::gaussian_clusters, {double(k), spread}, {}}; }
inline GeneratorNode ring(double radius, double jitter) { return {GenKind::ring, {radius, jitter}, {}}; }
inline GeneratorNode spiral(double turns, double jitter) { return {GenKind::spiral, {turns, jitter}, {}}; }
inline GeneratorNode grid(double jitter) { return {GenKind::grid, {jitter}, {}}; }
inline GeneratorNode mix(std::vector<double> weights, std::vector<GeneratorNode> children)
{
    return {GenKind::mix, std::move(weights), std::move(children)};
}
inline GeneratorNode transform(double a, double b, double c, double d, double tx, double ty, GeneratorNode child)
{
    return {GenKind::transform, {a, b, c, d, tx, ty}, {std::move(child)}};
}
inline GeneratorNode perturb(double sigma, GeneratorNode child) { return {GenKind::perturb, {sigma}, {std::move(child)}}; }

/// The "standard dataset" control: points uniform in the unit square.
inline GeneratorProgram canonical_uniform() { return GeneratorProgram{uniform_square(), GeneratorProgram::current_version, std::nullopt, std::nullopt}; }

inline std::size_t depth(const GeneratorNode& n)
{
    std::size_t d = 0;
    for (const auto& c : n.children) d = std::max(d, depth(c));
    return d + 1;
}

inline std::size_t node_count(const GeneratorNode& n)
{
    std::size_t c = 1;
    for (const auto& ch : n.children) c += node_count(ch);
    return c;
}

/// Family label used to bucket diagnostics: the kind of the outermost
/// sampling primitive, looking through transform/perturb wrappers.
inline std::string generator_family(const GeneratorNode& n)
{
    if (n.kind == GenKind::transform || n.kind == GenKind::perturb) return generator_family(n.children.front());
    return std::string(to_string(n.kind));
}

// ---- validation ----------------------------------------------------------

namespace detail {

inline void check_param(const std::string& path, const ParamSpec& spec, double v)
{
    if (!std::isfinite(v) || v < spec.lo || v > spec.hi) {
        throw ProgramValidationError(path + "." + std::string(spec.name),
                                     "value " + std::to_string(v) + " outside [" + std::to_string(spec.lo) + ", " + std::to_string(spec.hi) + "]");
    }
    if (spec.integer && v != std::floor(v)) throw ProgramValidationError(path + "." + std::string(spec.name), "must be an integer");
}

inline void validate_node(const GeneratorNode& n, const std::string& path)
{
    if (n.kind == GenKind::mix) {
        if (n.children.size() < gen_limits::mix_min_children || n.children.size() > gen_limits::mix_max_children) {
            throw ProgramValidationError(path, "mix needs 2..5 children");
        }
        if (n.params.size() != n.children.size()) throw ProgramValidationError(path, "mix needs one weight per child");
        for (std::size_t i = 0; i < n.params.size(); ++i) {
            check_param(path + ".weights[" + std::to_string(i) + "]", gen_limits::mix_weight, n.params[i]);
        }
    } else {
        const auto specs = param_specs(n.kind);
        if (n.params.size() != specs.size()) throw ProgramValidationError(path, "wrong parameter count for " + std::string(to_string(n.kind)));
        for (std::size_t i = 0; i < specs.size(); ++i) check_param(path, specs[i], n.params[i]);
        const std::size_t arity = is_leaf(n.kind) ? 0 : 1;
        if (n.children.size() != arity) throw ProgramValidationError(path, "wrong child count for " + std::string(to_string(n.kind)));
        if (n.kind == GenKind::transform) {
            const double det = n.params[0] * n.params[3] - n.params[1] * n.params[2];
            if (std::abs(det) < gen_limits::min_abs_det) throw ProgramValidationError(path, "transform |det| below 0.05");
        }
    }
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        validate_node(n.children[i], n.kind == GenKind::mix ? path + ".children[" + std::to_string(i) + "]" : path + ".child");
    }
}

} // namespace detail

inline void validate(const GeneratorProgram& p)
{
    if (p.version != GeneratorProgram::current_version) throw ProgramValidationError("version", "unsupported program version");
    detail::validate_node(p.root, "root");
    if (depth(p.root) > gen_limits::max_depth) throw ProgramValidationError("root", "AST deeper than 8");
    if (node_count(p.root) > gen_limits::max_nodes) throw ProgramValidationError("root", "AST has more than 64 nodes");
    if (p.prize_rule) detail::check_param("prize_rule", gen_limits::prize_scale, p.prize_rule->scale);
    if (p.budget_rule) detail::check_param("budget_rule", gen_limits::budget_factor, p.budget_rule->factor);
}

// ---- JSON ----------------------------------------------------------------

inline Json to_json(const GeneratorNode& n)
{
    Json j = {{"node", std::string(to_string(n.kind))}};
    if (n.kind == GenKind::mix) {
        j["weights"] = n.params;
        Json ch = Json::array();
        for (const auto& c : n.children) ch.push_back(to_json(c));
        j["children"] = std::move(ch);
        return j;
    }
    const auto specs = param_specs(n.kind);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].integer) {
            j[std::string(specs[i].name)] = static_cast<long long>(n.params[i]);
        } else {
            j[std::string(specs[i].name)] = n.params[i];
        }
    }
    if (!n.children.empty()) j["child"] = to_json(n.children.front());
    return j;
}

inline Json to_json(const GeneratorProgram& p)
{
    Json j = {{"version", p.version}, {"root", to_json(p.root)}};
    if (p.prize_rule) j["prize_rule"] = {{"rule", std::string(to_string(p.prize_rule->kind))}, {"scale", p.prize_rule->scale}};
    if (p.budget_rule) j["budget_rule"] = {{"factor", p.budget_rule->factor}};
    return j;
}

namespace detail {

inline void reject_unknown(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed)
{
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ProgramValidationError(path, "unknown field '" + key + "'");
        }
    }
}

inline double number_at(const Json& j, const std::string& key, const std::string& path)
{
    if (!j.contains(key) || !j[key].is_number()) throw ProgramValidationError(path, "missing numeric field '" + key + "'");
    return j[key].get<double>();
}

inline GeneratorNode generator_node_from_json(const Json& j, const std::string& path)
{
    if (!j.is_object() || !j.contains("node") || !j["node"].is_string()) throw ProgramValidationError(path, "expected {\"node\": ...}");
    const auto kind = gen_kind_from_string(j["node"].get<std::string>());
    if (!kind) throw ProgramValidationError(path, "unknown generator node '" + j["node"].get<std::string>() + "'");
    GeneratorNode n{*kind, {}, {}};
    if (*kind == GenKind::mix) {
        reject_unknown(j, path, {"node", "weights", "children"});
        if (!j.contains("weights") || !j["weights"].is_array()) throw ProgramValidationError(path, "mix requires weights");
        if (!j.contains("children") || !j["children"].is_array()) throw ProgramValidationError(path, "mix requires children");
        for (const auto& w : j["weights"]) {
            if (!w.is_number()) throw ProgramValidationError(path + ".weights", "weights must be numbers");
            n.params.push_back(w.get<double>());
        }
        std::size_t i = 0;
        for (const auto& c : j["children"]) {
            n.children.push_back(generator_node_from_json(c, path + ".children[" + std::to_string(i++) + "]"));
        }
        return n;
    }
    const auto specs = param_specs(*kind);
    std::vector<std::string_view> allowed{"node"};
    for (const auto& s : specs) allowed.push_back(s.name);
    if (!is_leaf(*kind)) allowed.push_back("child");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) throw ProgramValidationError(path, "unknown field '" + key + "'");
    }
    for (const auto& s : specs) n.params.push_back(number_at(j, std::string(s.name), path));
    if (!is_leaf(*kind)) {
        if (!j.contains("child")) throw ProgramValidationError(path, "missing child");
        n.children.push_back(generator_node_from_json(j["child"], path + ".child"));
    }
    return n;
}

} // namespace detail

/// Parses and validates. Errors carry the node path.
inline GeneratorProgram generator_from_json(const Json& j)
{
    if (!j.is_object()) throw ProgramValidationError("$", "generator program must be an object");
    detail::reject_unknown(j, "$", {"version", "root", "prize_rule", "budget_rule"});
    GeneratorProgram p;
    if (j.contains("version")) {
        if (!j["version"].is_number_integer()) throw ProgramValidationError("version", "must be an integer");
        p.version = j["version"].get<int>();
    }
    if (!j.contains("root")) throw ProgramValidationError("$", "missing root");
    p.root = detail::generator_node_from_json(j["root"], "root");
    if (j.contains("prize_rule")) {
        const Json& r = j["prize_rule"];
        if (!r.is_object()) throw ProgramValidationError("prize_rule", "must be an object");
        detail::reject_unknown(r, "prize_rule", {"rule", "scale"});
        const std::string rule = r.value("rule", "");
        PrizeRule pr;
        if (rule == "uniform") pr.kind = PrizeRuleKind::uniform;
        else if (rule == "distance_from_depot") pr.kind = PrizeRuleKind::distance_from_depot;
        else if (rule == "cluster_bonus") pr.kind = PrizeRuleKind::cluster_bonus;
        else throw ProgramValidationError("prize_rule", "unknown prize rule '" + rule + "'");
        pr.scale = detail::number_at(r, "scale", "prize_rule");
        p.prize_rule = pr;
    }
    if (j.contains("budget_rule")) {
        const Json& r = j["budget_rule"];
        if (!r.is_object()) throw ProgramValidationError("budget_rule", "must be an object");
        detail::reject_unknown(r, "budget_rule", {"factor"});
        p.budget_rule = BudgetRule{detail::number_at(r, "factor", "budget_rule")};
    }
    validate(p);
    return p;
}

/// Content hash of the canonical JSON form.
inline std::uint64_t program_hash(const GeneratorProgram& p) { return fnv1a64(to_json(p).dump()); }

// ---- generation ----------------------------------------------------------

struct GenerateOptions {
    /// Clamp to the unit box and min-max normalise each axis. Tests disable
    /// this to inspect raw sampler output.
    bool normalize = true;
};

namespace detail {

struct PreparedNode {
    const GeneratorNode* node = nullptr;
    std::vector<Point> centers;
    std::discrete_distribution<std::size_t> pick;
    std::vector<PreparedNode> children;
    std::size_t grid_side = 1;
};

inline PreparedNode prepare(const GeneratorNode& n, Rng& rng, std::size_t count)
{
    PreparedNode p;
    p.node = &n;
    if (n.kind == GenKind::gaussian_clusters) {
        const auto k = static_cast<std::size_t>(n.params[0]);
        for (std::size_t i = 0; i < k; ++i) {
            const double x = uniform01(rng);
            const double y = uniform01(rng);
            p.centers.push_back({x, y});
        }
    } else if (n.kind == GenKind::mix) {
        p.pick = std::discrete_distribution<std::size_t>(n.params.begin(), n.params.end());
    } else if (n.kind == GenKind::grid) {
        p.grid_side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
    }
    for (const auto& c : n.children) p.children.push_back(prepare(c, rng, count));
    return p;
}

inline double gaussian(Rng& rng, double sigma)
{
    if (sigma <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
}

inline Point sample(PreparedNode& p, Rng& rng)
{
    const auto& prm = p.node->params;
    switch (p.node->kind) {
    case GenKind::uniform_square: {
        const double x = uniform01(rng);
        const double y = uniform01(rng);
        return {x, y};
    }
    case GenKind::gaussian_clusters: {
        const Point c = p.centers[uniform_index(rng, p.centers.size())];
        const double dx = gaussian(rng, prm[1]);
        const double dy = gaussian(rng, prm[1]);
        return {c.x + dx, c.y + dy};
    }
    case GenKind::ring: {
        const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double r = prm[0] + gaussian(rng, prm[1]);
        return {0.5 + r * std::cos(theta), 0.5 + r * std::sin(theta)};
    }
    case GenKind::spiral: {
        const double t = uniform01(rng);
        const double theta = 2.0 * std::numbers::pi * prm[0] * t;
        const double r = 0.45 * t;
        const double dx = gaussian(rng, prm[1]);
        const double dy = gaussian(rng, prm[1]);
        return {0.5 + r * std::cos(theta) + dx, 0.5 + r * std::sin(theta) + dy};
    }
    case GenKind::grid: {
        const double g = static_cast<double>(p.grid_side);
        const double ix = static_cast<double>(uniform_index(rng, p.grid_side));
        const double iy = static_cast<double>(uniform_index(rng, p.grid_side));
        const double dx = gaussian(rng, prm[0]);
        const double dy = gaussian(rng, prm[0]);
        return {(ix + 0.5) / g + dx, (iy + 0.5) / g + dy};
    }
    case GenKind::mix: return sample(p.children[p.pick(rng)], rng);
    case GenKind::transform: {
        const Point q = sample(p.children.front(), rng);
        return {prm[0] * q.x + prm[1] * q.y + prm[4], prm[2] * q.x + prm[3] * q.y + prm[5]};
    }
    case GenKind::perturb: {
        const Point q = sample(p.children.front(), rng);
        const double dx = gaussian(rng, prm[0]);
        const double dy = gaussian(rng, prm[0]);
        return {q.x + dx, q.y + dy};
    }
    }
    return {};
}

inline void clamp_and_normalize(std::vector<Point>& pts)
{
    double lo[2] = {1.0, 1.0};
    double hi[2] = {0.0, 0.0};
    for (Point& p : pts) {
        p.x = std::clamp(p.x, 0.0, 1.0);
        p.y = std::clamp(p.y, 0.0, 1.0);
        lo[0] = std::min(lo[0], p.x);
        hi[0] = std::max(hi[0], p.x);
        lo[1] = std::min(lo[1], p.y);
        hi[1] = std::max(hi[1], p.y);
    }
    for (Point& p : pts) {
        p.x = hi[0] > lo[0] ? (p.x - lo[0]) / (hi[0] - lo[0]) : 0.5;
        p.y = hi[1] > lo[1] ? (p.y - lo[1]) / (hi[1] - lo[1]) : 0.5;
    }
}

inline std::vector<double> make_prizes(const PrizeRule& rule, const std::vector<Point>& pts, Rng& rng)
{
    const std::size_t n = pts.size();
    std::vector<double> prizes(n, 0.0);
    switch (rule.kind) {
    case PrizeRuleKind::uniform:
        for (std::size_t i = 1; i < n; ++i) prizes[i] = rule.scale * (0.01 + 0.99 * uniform01(rng));
        break;
    case PrizeRuleKind::distance_from_depot: {
        double far = 0.0;
        for (std::size_t i = 1; i < n; ++i) far = std::max(far, euclidean(pts[0], pts[i]));
        for (std::size_t i = 1; i < n; ++i) {
            const double rel = far > 0.0 ? euclidean(pts[0], pts[i]) / far : 1.0;
            prizes[i] = rule.scale * (0.01 + 0.99 * rel);
        }
        break;
    }
    case PrizeRuleKind::cluster_bonus: {
        // density bonus: neighbours within radius 0.1
        std::vector<double> count(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j && euclidean(pts[i], pts[j]) <= 0.1) count[i] += 1.0;
            }
        }
        const double top = *std::max_element(count.begin(), count.end());
        for (std::size_t i = 1; i < n; ++i) prizes[i] = rule.scale * (0.01 + 0.99 * (top > 0.0 ? count[i] / top : 0.0));
        break;
    }
    }
    return prizes;
}

} // namespace detail

inline std::string generated_instance_id(const GeneratorProgram& p, std::size_t n, SeedValue seed, ProblemKind kind)
{
    return std::string(to_string(kind)) + "-" + hex64(program_hash(p)).substr(0, 12) + "-n" + std::to_string(n) + "-s" +
           std::to_string(seed.value);
}

/// Executes a generator: a pure function of (program, n, seed, kind).
inline Instance generate(const GeneratorProgram& program, std::size_t n, SeedValue seed, ProblemKind kind, GenerateOptions opts = {})
{
    validate(program);
    if (n < gen_limits::min_points || n > gen_limits::max_points) {
        throw InstanceError("generate: n must lie in [4, 10000], got " + std::to_string(n));
    }
    Rng rng = make_rng(seed);
    auto prepared = detail::prepare(program.root, rng, n);
    std::vector<Point> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pts.push_back(detail::sample(prepared, rng));
    if (opts.normalize) detail::clamp_and_normalize(pts);

    Instance inst;
    inst.id = generated_instance_id(program, n, seed, kind);
    inst.kind = kind;
    if (kind == ProblemKind::op) {
        const PrizeRule rule = program.prize_rule.value_or(PrizeRule{});
        const BudgetRule budget = program.budget_rule.value_or(BudgetRule{});
        inst.prizes = detail::make_prizes(rule, pts, rng);
        inst.max_len = budget.factor * std::sqrt(static_cast<double>(n));
    }
    inst.coords = std::move(pts);
    validate(inst);
    return inst;
}

// ---- random programs and mutation ----------------------------------------

enum class GeneratorEdit { parameter_perturbation, node_replacement, subtree_insertion, subtree_deletion };

inline std::string_view to_string(GeneratorEdit e) noexcept
{
    switch (e) {
    case GeneratorEdit::parameter_perturbation: return "parameter_perturbation";
    case GeneratorEdit::node_replacement: return "node_replacement";
    case GeneratorEdit::subtree_insertion: return "subtree_insertion";
    case GeneratorEdit::subtree_deletion: return "subtree_deletion";
    }
    return "?";
}

using GeneratorMutationWeights = MutationWeights<GeneratorEdit, 4>;

namespace detail {

inline GeneratorNode random_transform(Rng& rng, GeneratorNode child)
{
    for (;;) {
        const double a = uniform(rng, 0.5, 1.5) * (uniform01(rng) < 0.2 ? -1.0 : 1.0);
        const double b = uniform(rng, -0.6, 0.6);
        const double c = uniform(rng, -0.6, 0.6);
        const double d = uniform(rng, 0.5, 1.5) * (uniform01(rng) < 0.2 ? -1.0 : 1.0);
        const double tx = uniform(rng, -0.3, 0.3);
        const double ty = uniform(rng, -0.3, 0.3);
        if (std::abs(a * d - b * c) >= 0.2) return transform(a, b, c, d, tx, ty, std::move(child));
    }
}

inline GeneratorNode random_leaf(Rng& rng)
{
    switch (uniform_index(rng, 5)) {
    case 0: return uniform_square();
    case 1: {
        const int k = static_cast<int>(1 + uniform_index(rng, 8));
        return gaussian_clusters(k, uniform(rng, 0.005, 0.1));
    }
    case 2: {
        const double r = uniform(rng, 0.1, 0.5);
        return ring(r, uniform(rng, 0.0, 0.03));
    }
    case 3: {
        const double t = uniform(rng, 0.5, 6.0);
        return spiral(t, uniform(rng, 0.0, 0.03));
    }
    default: return grid(uniform(rng, 0.0, 0.02));
    }
}

inline GeneratorNode random_node(Rng& rng, std::size_t max_depth)
{
    if (max_depth <= 1 || uniform01(rng) < 0.55) return random_leaf(rng);
    switch (uniform_index(rng, 3)) {
    case 0: {
        const std::size_t k = 2 + uniform_index(rng, 2);
        std::vector<double> w;
        std::vector<GeneratorNode> ch;
        for (std::size_t i = 0; i < k; ++i) {
            w.push_back(uniform(rng, 0.5, 2.0));
            ch.push_back(random_node(rng, max_depth - 1));
        }
        return mix(std::move(w), std::move(ch));
    }
    case 1: return random_transform(rng, random_node(rng, max_depth - 1));
    default: {
        const double sigma = uniform(rng, 0.005, 0.08);
        return perturb(sigma, random_node(rng, max_depth - 1));
    }
    }
}

struct NodeSite {
    GeneratorNode* node;
    std::size_t level;  // root is level 1
};

inline void collect_sites(GeneratorNode& n, std::size_t level, std::vector<NodeSite>& out)
{
    out.push_back({&n, level});
    for (auto& c : n.children) collect_sites(c, level + 1, out);
}

inline bool edit_parameter(GeneratorProgram& p, Rng& rng)
{
    struct ParamSite {
        double* value;
        ParamSpec spec;
    };
    std::vector<NodeSite> nodes;
    collect_sites(p.root, 1, nodes);
    std::vector<ParamSite> sites;
    for (const auto& s : nodes) {
        if (s.node->kind == GenKind::mix) {
            for (double& w : s.node->params) sites.push_back({&w, gen_limits::mix_weight});
        } else {
            const auto specs = param_specs(s.node->kind);
            for (std::size_t i = 0; i < specs.size(); ++i) sites.push_back({&s.node->params[i], specs[i]});
        }
    }
    if (p.prize_rule) sites.push_back({&p.prize_rule->scale, gen_limits::prize_scale});
    if (p.budget_rule) sites.push_back({&p.budget_rule->factor, gen_limits::budget_factor});
    if (sites.empty()) return false;
    const ParamSite site = sites[uniform_index(rng, sites.size())];
    if (site.spec.integer) {
        const double step = uniform01(rng) < 0.5 ? -1.0 : 1.0;
        *site.value = std::clamp(*site.value + step, site.spec.lo, site.spec.hi);
    } else {
        *site.value = perturb_real(*site.value, site.spec.lo, site.spec.hi, rng);
    }
    return true;
}

inline bool edit_replace(GeneratorProgram& p, Rng& rng)
{
    std::vector<NodeSite> nodes;
    collect_sites(p.root, 1, nodes);
    const std::size_t n_sites = nodes.size() + (p.prize_rule ? 1 : 0);
    const std::size_t pick = uniform_index(rng, n_sites);
    if (pick == nodes.size()) {
        const auto old = p.prize_rule->kind;
        auto next = static_cast<PrizeRuleKind>((static_cast<int>(old) + 1 + uniform_index(rng, 2)) % 3);
        p.prize_rule->kind = next;
        return true;
    }
    NodeSite site = nodes[pick];
    const std::size_t budget = gen_limits::max_depth - site.level + 1;
    for (int tries = 0; tries < 8; ++tries) {
        GeneratorNode fresh = random_node(rng, std::min<std::size_t>(2, budget));
        if (fresh.kind != site.node->kind) {
            *site.node = std::move(fresh);
            return true;
        }
    }
    return false;
}

inline bool edit_insert(GeneratorProgram& p, Rng& rng)
{
    std::vector<NodeSite> nodes;
    collect_sites(p.root, 1, nodes);
    NodeSite site = nodes[uniform_index(rng, nodes.size())];
    GeneratorNode inner = std::move(*site.node);
    switch (uniform_index(rng, 3)) {
    case 0: *site.node = random_transform(rng, std::move(inner)); break;
    case 1: {
        const double sigma = uniform(rng, 0.005, 0.08);
        *site.node = perturb(sigma, std::move(inner));
        break;
    }
    default: {
        const double w0 = uniform(rng, 0.5, 2.0);
        const double w1 = uniform(rng, 0.5, 2.0);
        GeneratorNode other = random_leaf(rng);
        *site.node = mix({w0, w1}, {std::move(inner), std::move(other)});
        break;
    }
    }
    return true;
}

inline bool edit_delete(GeneratorProgram& p, Rng& rng)
{
    std::vector<NodeSite> nodes;
    collect_sites(p.root, 1, nodes);
    std::vector<NodeSite> inner;
    for (const auto& s : nodes) {
        if (!is_leaf(s.node->kind)) inner.push_back(s);
    }
    if (inner.empty()) return false;
    NodeSite site = inner[uniform_index(rng, inner.size())];
    GeneratorNode keep = site.node->children[uniform_index(rng, site.node->children.size())];
    *site.node = std::move(keep);
    return true;
}

inline bool apply_generator_edit(GeneratorProgram& p, GeneratorEdit e, Rng& rng)
{
    switch (e) {
    case GeneratorEdit::parameter_perturbation: return edit_parameter(p, rng);
    case GeneratorEdit::node_replacement: return edit_replace(p, rng);
    case GeneratorEdit::subtree_insertion: return edit_insert(p, rng);
    case GeneratorEdit::subtree_deletion: return edit_delete(p, rng);
    }
    return false;
}

inline bool is_valid(const GeneratorProgram& p)
{
    try {
        validate(p);
        return true;
    } catch (const ProgramValidationError&) {
        return false;
    }
}

} // namespace detail

/// Random program of bounded depth, used to seed initial populations.
inline GeneratorProgram random_generator(SeedValue seed, ProblemKind kind, std::size_t max_depth = 3)
{
    Rng rng = make_rng(seed);
    GeneratorProgram p{detail::random_node(rng, max_depth), GeneratorProgram::current_version, std::nullopt, std::nullopt};
    if (kind == ProblemKind::op) {
        const auto rule = static_cast<PrizeRuleKind>(uniform_index(rng, 3));
        const double scale = uniform(rng, 0.5, 2.0);
        p.prize_rule = PrizeRule{rule, scale};
        p.budget_rule = BudgetRule{uniform(rng, 0.5, 1.0)};
    }
    return p;
}

struct GeneratorMutation {
    GeneratorProgram program;
    GeneratorEdit edit;
};

/// Exactly one AST edit, drawn by `weights`. Failed draws (no applicable site,
/// invalid result, or no change) are redrawn up to 16 times; then a parameter
/// perturbation is forced, falling back to replacing the root when the
/// program has no numeric parameters at all.
inline GeneratorMutation mutate_generator_traced(const GeneratorProgram& program, SeedValue seed, const GeneratorMutationWeights& weights)
{
    validate(program);
    Rng rng = make_rng(seed);
    for (int attempt = 0; attempt < max_mutation_attempts; ++attempt) {
        const GeneratorEdit edit = weights.draw(rng);
        GeneratorProgram child = program;
        if (detail::apply_generator_edit(child, edit, rng) && detail::is_valid(child) && !(child == program)) {
            return {std::move(child), edit};
        }
    }
    for (int attempt = 0; attempt < max_mutation_attempts; ++attempt) {
        GeneratorProgram child = program;
        if (detail::edit_parameter(child, rng) && detail::is_valid(child) && !(child == program)) {
            return {std::move(child), GeneratorEdit::parameter_perturbation};
        }
    }
    for (;;) {
        GeneratorProgram child = program;
        GeneratorNode fresh = detail::random_leaf(rng);
        if (fresh.kind != child.root.kind) {
            child.root = std::move(fresh);
            return {std::move(child), GeneratorEdit::node_replacement};
        }
    }
}

inline GeneratorProgram mutate_generator(const GeneratorProgram& program, SeedValue seed, const GeneratorMutationWeights& weights)
{
    return mutate_generator_traced(program, seed, weights).program;
}

} // namespace ealg
