#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ealg/core.hpp"
#include "ealg/heuristic_dsl.hpp"
#include "ealg/instance_dsl.hpp"
#include "ealg/parallel.hpp"
#include "ealg/solvers/aco.hpp"
#include "ealg/solvers/exact.hpp"
#include "ealg/solvers/gls.hpp"

namespace ealg {

enum class Task { tsp_gls, tsp_aco, op_aco };

inline std::string_view to_string(Task t) noexcept
{
    switch (t) {
    case Task::tsp_gls: return "tsp_gls";
    case Task::tsp_aco: return "tsp_aco";
    case Task::op_aco: return "op_aco";
    }
    return "?";
}

inline Task task_from_string(std::string_view s)
{
    if (s == "tsp_gls") return Task::tsp_gls;
    if (s == "tsp_aco") return Task::tsp_aco;
    if (s == "op_aco") return Task::op_aco;
    throw TypeError("unknown task '" + std::string(s) + "'");
}

inline HeuristicTarget task_target(Task t) noexcept
{
    switch (t) {
    case Task::tsp_gls: return HeuristicTarget::gls_guide;
    case Task::tsp_aco: return HeuristicTarget::aco_eta_tsp;
    case Task::op_aco: return HeuristicTarget::aco_eta_op;
    }
    return HeuristicTarget::gls_guide;
}

inline ProblemKind task_kind(Task t) noexcept { return t == Task::op_aco ? ProblemKind::op : ProblemKind::tsp; }

/// ratio_of_means is E[h]/E[ref] - 1; mean_of_ratios is kept for sensitivity
/// studies only.
enum class GapEstimator { ratio_of_means, mean_of_ratios };

inline std::string_view to_string(GapEstimator e) noexcept
{
    return e == GapEstimator::ratio_of_means ? "ratio_of_means" : "mean_of_ratios";
}

inline GapEstimator estimator_from_string(std::string_view s)
{
    if (s == "ratio_of_means") return GapEstimator::ratio_of_means;
    if (s == "mean_of_ratios") return GapEstimator::mean_of_ratios;
    throw MeasurementError("unknown gap estimator '" + std::string(s) + "'");
}

struct ReferencePolicy {
    std::size_t exact_threshold = 12;
    double ref_budget_multiplier = 10.0;
    GapEstimator estimator = GapEstimator::ratio_of_means;

    friend bool operator==(const ReferencePolicy&, const ReferencePolicy&) = default;
};

inline void validate(const ReferencePolicy& p)
{
    if (p.exact_threshold > held_karp_max_nodes) throw SizeLimitError("exact_threshold must not exceed 18");
    if (!(p.ref_budget_multiplier > 0.0) || !std::isfinite(p.ref_budget_multiplier))
        throw MeasurementError("ref_budget_multiplier must be positive");
}

inline Json to_json(const ReferencePolicy& p)
{
    return {{"exact_threshold", p.exact_threshold},
            {"ref_budget_multiplier", p.ref_budget_multiplier},
            {"estimator", std::string(to_string(p.estimator))}};
}

inline ReferencePolicy reference_policy_from_json(const Json& j)
{
    ReferencePolicy p;
    p.exact_threshold = j.at("exact_threshold").get<std::size_t>();
    p.ref_budget_multiplier = j.at("ref_budget_multiplier").get<double>();
    if (j.contains("estimator")) p.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    validate(p);
    return p;
}

/// Solver settings used for the heuristic under test. Seeds inside are
/// ignored; every instance gets its own derived solve seed.
struct SolverBudget {
    GlsParams gls{};
    AcoParams aco{};
};

/// Fixed restart seeds of the long-budget GLS reference.
inline constexpr std::uint64_t reference_seeds[3] = {1, 2, 3};

// ---- gap arithmetic --------------------------------------------------------

namespace detail {

inline void check_cost_lists(const std::vector<double>& heur, const std::vector<double>& ref)
{
    if (heur.empty() || ref.empty()) throw MeasurementError("gap of an empty batch");
    if (heur.size() != ref.size()) throw MeasurementError("heuristic and reference batches differ in length");
    for (std::size_t i = 0; i < heur.size(); ++i) {
        if (!std::isfinite(heur[i]) || !std::isfinite(ref[i])) throw MeasurementError("non-finite cost in batch");
    }
}

inline double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double mean_ratio(const std::vector<double>& heur, const std::vector<double>& ref)
{
    double s = 0.0;
    for (std::size_t i = 0; i < heur.size(); ++i) {
        if (!(ref[i] > 0.0)) throw MeasurementError("mean_of_ratios needs every reference value positive");
        s += heur[i] / ref[i];
    }
    return s / static_cast<double>(heur.size());
}

} // namespace detail

/// mean(heur)/mean(ref) - 1 (a ratio of means, not a mean of ratios).
inline double compute_gap(const std::vector<double>& heur, const std::vector<double>& ref,
                          GapEstimator estimator = GapEstimator::ratio_of_means)
{
    detail::check_cost_lists(heur, ref);
    if (estimator == GapEstimator::mean_of_ratios) return detail::mean_ratio(heur, ref) - 1.0;
    const double mr = detail::mean(ref);
    if (!(mr > 0.0)) throw MeasurementError("reference mean must be positive");
    return detail::mean(heur) / mr - 1.0;
}

/// OP regret: 1 - mean(prize_h)/mean(prize_ref). Positive when the heuristic
/// collects less than the reference.
inline double compute_hardness(const std::vector<double>& heur_prize, const std::vector<double>& ref_prize,
                               GapEstimator estimator = GapEstimator::ratio_of_means)
{
    detail::check_cost_lists(heur_prize, ref_prize);
    if (estimator == GapEstimator::mean_of_ratios) return 1.0 - detail::mean_ratio(heur_prize, ref_prize);
    const double mr = detail::mean(ref_prize);
    if (!(mr > 0.0)) throw MeasurementError("reference prize mean must be positive");
    return 1.0 - detail::mean(heur_prize) / mr;
}

// ---- reference values ------------------------------------------------------

/// Thread-safe memo of reference values, keyed by instance identity and the
/// parameters that determine the reference. Can be persisted as JSON.
class ReferenceCache {
public:
    std::optional<double> find(const std::string& key) const
    {
        std::lock_guard lock(mu_);
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        ++hits_;
        return it->second;
    }

    void store(const std::string& key, double v)
    {
        std::lock_guard lock(mu_);
        values_.emplace(key, v);
    }

    std::size_t size() const
    {
        std::lock_guard lock(mu_);
        return values_.size();
    }

    std::size_t hits() const
    {
        std::lock_guard lock(mu_);
        return hits_;
    }

    Json to_json() const
    {
        std::lock_guard lock(mu_);
        Json j = Json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

    void merge_json(const Json& j)
    {
        std::lock_guard lock(mu_);
        for (const auto& [k, v] : j.items()) values_.emplace(k, v.get<double>());
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, double> values_;
    mutable std::size_t hits_ = 0;
};

namespace detail {

inline std::string reference_key(const Instance& inst, const ReferencePolicy& policy, const std::string& extra)
{
    char mult[32];
    std::snprintf(mult, sizeof mult, "%.17g", policy.ref_budget_multiplier);
    return inst.id + "#" + hex64(content_hash(inst)) + "|t" + std::to_string(policy.exact_threshold) + "|m" + mult + extra;
}

inline std::size_t scaled(std::size_t base, double multiplier)
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(base) * multiplier));
}

} // namespace detail

/// f* for a TSP instance: Held-Karp up to the exact threshold, otherwise the
/// best of three long-budget baseline GLS runs with fixed seeds.
inline double reference_cost(const Instance& inst, const ReferencePolicy& policy, ReferenceCache* cache = nullptr,
                             std::size_t base_budget = GlsParams{}.budget_ls_iters)
{
    if (inst.kind != ProblemKind::tsp) throw TypeError("reference_cost requires a TSP instance");
    validate(policy);
    const std::string key = detail::reference_key(inst, policy, "|b" + std::to_string(base_budget));
    if (cache) {
        if (auto v = cache->find(key)) return *v;
    }
    double best;
    if (inst.size() <= policy.exact_threshold) {
        best = held_karp(inst).length;
    } else {
        const DistanceMatrix d = distance_matrix(inst);
        const HeuristicProgram guide = baseline_heuristic(HeuristicTarget::gls_guide);
        const SquareMatrix g = interpret(guide, inst, d);
        best = std::numeric_limits<double>::infinity();
        for (std::uint64_t s : reference_seeds) {
            GlsParams p;
            p.budget_ls_iters = detail::scaled(base_budget, policy.ref_budget_multiplier);
            p.seed = root_seed(s, "reference-gls");
            best = std::min(best, solve_gls(inst, d, g, p).cost_or_prize);
        }
    }
    if (cache) cache->store(key, best);
    return best;
}

/// Reference prize for an OP instance: the baseline visibility with the
/// iteration budget scaled by the policy multiplier, run with `seed`.
inline double reference_prize(const Instance& inst, const ReferencePolicy& policy, SeedValue seed,
                              const AcoParams& base = AcoParams{}, ReferenceCache* cache = nullptr)
{
    if (inst.kind != ProblemKind::op) throw TypeError("reference_prize requires an OP instance");
    validate(policy);
    AcoParams p = base;
    p.iterations = detail::scaled(base.iterations, policy.ref_budget_multiplier);
    p.seed = seed;
    char extra[160];
    std::snprintf(extra, sizeof extra, "|op|s%llu|a%zu|i%zu|%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(seed.value),
                  p.n_ants, p.iterations, p.alpha, p.beta, p.rho, p.q0);
    const std::string key = detail::reference_key(inst, policy, extra);
    if (cache) {
        if (auto v = cache->find(key)) return *v;
    }
    const double prize = solve_aco_op(inst, baseline_heuristic(HeuristicTarget::aco_eta_op), p).cost_or_prize;
    if (cache) cache->store(key, prize);
    return prize;
}

/// Runs the task's scaffold with `heuristic` and returns its cost (TSP) or
/// collected prize (OP).
inline SolveResult solve_task(Task task, const Instance& inst, const HeuristicProgram& heuristic, const SolverBudget& budget,
                              SeedValue seed)
{
    if (heuristic.target != task_target(task)) {
        throw TypeError("heuristic target " + std::string(to_string(heuristic.target)) + " does not fit task " +
                        std::string(to_string(task)));
    }
    switch (task) {
    case Task::tsp_gls: {
        GlsParams p = budget.gls;
        p.seed = seed;
        return solve_gls(inst, heuristic, p);
    }
    case Task::tsp_aco: {
        AcoParams p = budget.aco;
        p.seed = seed;
        return solve_aco_tsp(inst, heuristic, p);
    }
    case Task::op_aco: {
        AcoParams p = budget.aco;
        p.seed = seed;
        return solve_aco_op(inst, heuristic, p);
    }
    }
    throw TypeError("unknown task");
}

// ---- batch evaluation ------------------------------------------------------

struct InstanceResult {
    std::uint64_t seed = 0;
    double heur_cost = 0.0;  // prize for OP
    double ref_cost = 0.0;

    friend bool operator==(const InstanceResult&, const InstanceResult&) = default;
};

/// Hardness of one (generator, heuristic) pairing. For TSP tasks `gap` is the
/// relative optimality gap; for OP it is the prize regret and the cost
/// columns hold prizes.
struct GapReport {
    std::string generator_id;
    std::string heuristic_id;
    Task task = Task::tsp_gls;
    std::size_t n = 0;
    std::size_t batch = 0;
    std::uint64_t base_seed = 0;
    ReferencePolicy policy{};
    double mean_heur_cost = 0.0;
    double mean_ref_cost = 0.0;
    double gap = 0.0;
    std::vector<InstanceResult> per_instance;

    friend bool operator==(const GapReport&, const GapReport&) = default;
};

inline Json to_json(const GapReport& r)
{
    Json rows = Json::array();
    for (const auto& p : r.per_instance) rows.push_back({{"seed", p.seed}, {"heur_cost", p.heur_cost}, {"ref_cost", p.ref_cost}});
    return {{"generator_id", r.generator_id},
            {"heuristic_id", r.heuristic_id},
            {"task", std::string(to_string(r.task))},
            {"n", r.n},
            {"batch", r.batch},
            {"base_seed", r.base_seed},
            {"policy", to_json(r.policy)},
            {"mean_heur_cost", r.mean_heur_cost},
            {"mean_ref_cost", r.mean_ref_cost},
            {"gap", r.gap},
            {"per_instance", rows}};
}

inline GapReport gap_report_from_json(const Json& j)
{
    GapReport r;
    r.generator_id = j.at("generator_id").get<std::string>();
    r.heuristic_id = j.at("heuristic_id").get<std::string>();
    r.task = task_from_string(j.at("task").get<std::string>());
    r.n = j.at("n").get<std::size_t>();
    r.batch = j.at("batch").get<std::size_t>();
    r.base_seed = j.at("base_seed").get<std::uint64_t>();
    r.policy = reference_policy_from_json(j.at("policy"));
    r.mean_heur_cost = j.at("mean_heur_cost").get<double>();
    r.mean_ref_cost = j.at("mean_ref_cost").get<double>();
    r.gap = j.at("gap").get<double>();
    for (const auto& row : j.at("per_instance"))
        r.per_instance.push_back({row.at("seed").get<std::uint64_t>(), row.at("heur_cost").get<double>(), row.at("ref_cost").get<double>()});
    return r;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v)
{
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline constexpr const char* gap_csv_header = "n,generator_id,heuristic_id,gap,mean_heur,mean_ref,batch";

inline std::string to_csv_row(const GapReport& r)
{
    return std::to_string(r.n) + "," + r.generator_id + "," + r.heuristic_id + "," + format_real(r.gap) + "," +
           format_real(r.mean_heur_cost) + "," + format_real(r.mean_ref_cost) + "," + std::to_string(r.batch);
}

inline std::string to_csv(const std::vector<GapReport>& reports)
{
    std::string out = std::string(gap_csv_header) + "\n";
    for (const auto& r : reports) out += to_csv_row(r) + "\n";
    return out;
}

struct EvalOptions {
    SolverBudget budget{};
    ReferenceCache* cache = nullptr;
    std::string generator_id;  // defaults to a program hash when empty
    std::string heuristic_id;
};

inline std::string default_program_id(const GeneratorProgram& g) { return "g-" + hex64(program_hash(g)).substr(0, 12); }
inline std::string default_program_id(const HeuristicProgram& h) { return "h-" + hex64(program_hash(h)).substr(0, 12); }

namespace detail {

/// Seed of the solver run on the instance generated from `instance_seed`.
/// The OP reference uses the same stream, so a heuristic identical to the
/// reference configuration measures exactly zero.
inline SeedValue solve_seed(SeedValue instance_seed) { return derive_seed(instance_seed, "solve"); }

inline InstanceResult evaluate_one(const Instance& inst, std::uint64_t seed, const HeuristicProgram& heuristic, Task task,
                                   const ReferencePolicy& policy, const EvalOptions& opts)
{
    try {
        const SeedValue ss = solve_seed(SeedValue{seed});
        InstanceResult r{seed, 0.0, 0.0};
        r.heur_cost = solve_task(task, inst, heuristic, opts.budget, ss).cost_or_prize;
        // the reference always runs at multiplier x the default budgets
        r.ref_cost = task == Task::op_aco ? reference_prize(inst, policy, ss, AcoParams{}, opts.cache)
                                          : reference_cost(inst, policy, opts.cache);
        return r;
    } catch (const TypeError&) {
        throw;
    } catch (const EvaluationError&) {
        throw;
    } catch (const Error& e) {
        throw EvaluationError(seed, e.what());
    }
}

inline void finish_report(GapReport& r)
{
    std::vector<double> h, f;
    for (const auto& p : r.per_instance) {
        h.push_back(p.heur_cost);
        f.push_back(p.ref_cost);
    }
    r.mean_heur_cost = mean(h);
    r.mean_ref_cost = mean(f);
    if (!(r.mean_ref_cost > 0.0)) throw MeasurementError("reference mean must be positive");
    r.gap = r.task == Task::op_aco ? compute_hardness(h, f, r.policy.estimator) : compute_gap(h, f, r.policy.estimator);
}

} // namespace detail

/// Generates `batch` instances with seeds base_seed..base_seed+batch-1, solves
/// each with `heuristic` under the task's scaffold, and compares against the
/// reference policy. Instances are solved concurrently; results are
/// assembled in seed order.
inline GapReport evaluate_hardness(const GeneratorProgram& generator, const HeuristicProgram& heuristic, std::size_t n,
                                   std::size_t batch, SeedValue base_seed, Task task, const ReferencePolicy& policy,
                                   const EvalOptions& opts = {})
{
    if (batch == 0) throw MeasurementError("batch must be at least 1");
    validate(policy);
    if (heuristic.target != task_target(task)) throw TypeError("heuristic target does not fit the task");
    GapReport r;
    r.generator_id = opts.generator_id.empty() ? default_program_id(generator) : opts.generator_id;
    r.heuristic_id = opts.heuristic_id.empty() ? default_program_id(heuristic) : opts.heuristic_id;
    r.task = task;
    r.n = n;
    r.batch = batch;
    r.base_seed = base_seed.value;
    r.policy = policy;
    r.per_instance.resize(batch);
    std::vector<SeedValue> seeds(batch);
    for (std::size_t i = 0; i < batch; ++i) seeds[i] = offset_seed(base_seed, i);
    parallel_for(batch, [&](std::size_t i) {
        Instance inst;
        try {
            inst = generate(generator, n, seeds[i], task_kind(task));
        } catch (const Error& e) {
            throw EvaluationError(seeds[i].value, e.what());
        }
        r.per_instance[i] = detail::evaluate_one(inst, seeds[i].value, heuristic, task, policy, opts);
    });
    detail::finish_report(r);
    return r;
}

/// Same measurement over a fixed instance list (e.g. a directory of files).
/// Instance i is assigned seed base_seed + i for its solver stream.
inline GapReport evaluate_instances(const std::vector<Instance>& instances, const HeuristicProgram& heuristic, Task task,
                                    const ReferencePolicy& policy, SeedValue base_seed = {}, const EvalOptions& opts = {})
{
    if (instances.empty()) throw MeasurementError("no instances to evaluate");
    validate(policy);
    if (heuristic.target != task_target(task)) throw TypeError("heuristic target does not fit the task");
    GapReport r;
    r.generator_id = opts.generator_id.empty() ? "fixed" : opts.generator_id;
    r.heuristic_id = opts.heuristic_id.empty() ? default_program_id(heuristic) : opts.heuristic_id;
    r.task = task;
    r.n = instances.front().size();
    for (const auto& inst : instances)
        if (inst.size() != r.n) r.n = 0;  // mixed sizes
    r.batch = instances.size();
    r.base_seed = base_seed.value;
    r.policy = policy;
    r.per_instance.resize(instances.size());
    std::vector<SeedValue> seeds(instances.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = offset_seed(base_seed, i);
    parallel_for(instances.size(), [&](std::size_t i) {
        if (instances[i].kind != task_kind(task)) throw TypeError("instance " + instances[i].id + " does not fit the task");
        r.per_instance[i] = detail::evaluate_one(instances[i], seeds[i].value, heuristic, task, policy, opts);
    });
    detail::finish_report(r);
    return r;
}

} // namespace ealg
