#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ealg/evaluation.hpp"
#include "ealg/heuristic_dsl.hpp"
#include "ealg/instance_dsl.hpp"
#include "ealg/mutation.hpp"
#include "ealg/rng.hpp"

namespace ealg {

enum class Side { generator, heuristic };

inline std::string_view to_string(Side s) noexcept { return s == Side::generator ? "generator" : "heuristic"; }

inline Side side_from_string(std::string_view s)
{
    if (s == "generator") return Side::generator;
    if (s == "heuristic") return Side::heuristic;
    throw ParseError("unknown side '" + std::string(s) + "'");
}

enum class SynthesizerKind { offline, llm };

inline std::string_view to_string(SynthesizerKind k) noexcept { return k == SynthesizerKind::offline ? "offline" : "llm"; }

inline SynthesizerKind synthesizer_from_string(std::string_view s)
{
    if (s == "offline") return SynthesizerKind::offline;
    if (s == "llm") return SynthesizerKind::llm;
    throw ParseError("unknown synthesizer '" + std::string(s) + "'");
}

// ---- configuration ---------------------------------------------------------

/// Connection settings for the language-model synthesizer. Only the name of
/// the environment variable holding the key is stored, never the key.
struct ConnectorConfig {
    std::string endpoint = "http://localhost:8000/v1/chat/completions";
    std::string model = "unspecified";
    double temperature = 0.8;
    int max_retries = 3;
    double timeout_seconds = 60.0;
    std::string api_key_env = "EALG_API_KEY";
    std::size_t token_budget = 6000;
    std::size_t reflection_count = 3;

    friend bool operator==(const ConnectorConfig&, const ConnectorConfig&) = default;
};

inline Json to_json(const ConnectorConfig& c)
{
    return {{"endpoint", c.endpoint},       {"model", c.model},
            {"temperature", c.temperature}, {"max_retries", c.max_retries},
            {"timeout_seconds", c.timeout_seconds}, {"api_key_env", c.api_key_env},
            {"token_budget", c.token_budget}, {"reflection_count", c.reflection_count}};
}

inline ConnectorConfig connector_config_from_json(const Json& j)
{
    ConnectorConfig c;
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.token_budget = j.value("token_budget", c.token_budget);
    c.reflection_count = j.value("reflection_count", c.reflection_count);
    if (c.max_retries < 0) throw ParseError("max_retries must be nonnegative");
    return c;
}

struct EvolutionConfig {
    Task task = Task::tsp_gls;
    std::size_t n = 100;
    std::size_t batch = 16;
    std::size_t pop_gen = 8;
    std::size_t pop_heur = 8;
    std::size_t generations = 15;
    std::size_t offspring_per_parent = 2;
    std::size_t elitism = 2;
    std::size_t top_k = 3;  // generators a heuristic is scored against
    SynthesizerKind synthesizer = SynthesizerKind::offline;
    SeedValue master_seed{0};
    ReferencePolicy reference{};
    SolverBudget budget{};
    ConnectorConfig connector{};
};

inline void validate(const EvolutionConfig& c)
{
    if (c.pop_gen < 2 || c.pop_heur < 2) throw ParseError("populations must hold at least 2 programs");
    if (c.elitism >= c.pop_gen || c.elitism >= c.pop_heur) throw ParseError("elitism must be smaller than both populations");
    if (c.batch == 0) throw ParseError("batch must be at least 1");
    if (c.offspring_per_parent == 0) throw ParseError("offspring_per_parent must be at least 1");
    if (c.top_k == 0) throw ParseError("top_k must be at least 1");
    if (c.n < gen_limits::min_points || c.n > gen_limits::max_points) throw ParseError("n must lie in [4, 10000]");
    validate(c.reference);
}

inline Json to_json(const EvolutionConfig& c)
{
    const GlsParams& g = c.budget.gls;
    const AcoParams& a = c.budget.aco;
    return {{"task", std::string(to_string(c.task))},
            {"n", c.n},
            {"batch", c.batch},
            {"pop_gen", c.pop_gen},
            {"pop_heur", c.pop_heur},
            {"generations", c.generations},
            {"offspring_per_parent", c.offspring_per_parent},
            {"elitism", c.elitism},
            {"top_k", c.top_k},
            {"synthesizer", std::string(to_string(c.synthesizer))},
            {"master_seed", c.master_seed.value},
            {"reference", to_json(c.reference)},
            {"gls", {{"budget_ls_iters", g.budget_ls_iters}, {"lambda_alpha", g.lambda_alpha}, {"candidates", g.candidates}}},
            {"aco",
             {{"n_ants", a.n_ants}, {"iterations", a.iterations}, {"alpha", a.alpha}, {"beta", a.beta}, {"rho", a.rho}, {"q0", a.q0}}},
            {"connector", to_json(c.connector)}};
}

inline bool operator==(const EvolutionConfig& a, const EvolutionConfig& b) { return to_json(a) == to_json(b); }

inline EvolutionConfig evolution_config_from_json(const Json& j)
{
    EvolutionConfig c;
    c.task = task_from_string(j.at("task").get<std::string>());
    c.n = j.at("n").get<std::size_t>();
    c.batch = j.value("batch", c.batch);
    c.pop_gen = j.value("pop_gen", c.pop_gen);
    c.pop_heur = j.value("pop_heur", c.pop_heur);
    c.generations = j.value("generations", c.generations);
    c.offspring_per_parent = j.value("offspring_per_parent", c.offspring_per_parent);
    c.elitism = j.value("elitism", c.elitism);
    c.top_k = j.value("top_k", c.top_k);
    c.synthesizer = synthesizer_from_string(j.value("synthesizer", std::string("offline")));
    c.master_seed = SeedValue{j.value("master_seed", std::uint64_t{0})};
    if (j.contains("reference")) c.reference = reference_policy_from_json(j.at("reference"));
    if (j.contains("gls")) {
        const Json& g = j.at("gls");
        c.budget.gls.budget_ls_iters = g.value("budget_ls_iters", c.budget.gls.budget_ls_iters);
        c.budget.gls.lambda_alpha = g.value("lambda_alpha", c.budget.gls.lambda_alpha);
        c.budget.gls.candidates = g.value("candidates", c.budget.gls.candidates);
    }
    if (j.contains("aco")) {
        const Json& a = j.at("aco");
        c.budget.aco.n_ants = a.value("n_ants", c.budget.aco.n_ants);
        c.budget.aco.iterations = a.value("iterations", c.budget.aco.iterations);
        c.budget.aco.alpha = a.value("alpha", c.budget.aco.alpha);
        c.budget.aco.beta = a.value("beta", c.budget.aco.beta);
        c.budget.aco.rho = a.value("rho", c.budget.aco.rho);
        c.budget.aco.q0 = a.value("q0", c.budget.aco.q0);
    }
    if (j.contains("connector")) c.connector = connector_config_from_json(j.at("connector"));
    validate(c);
    return c;
}

// ---- reflection ------------------------------------------------------------

struct ReflectionSummary {
    std::vector<std::string> degraded_families;
    std::vector<std::string> improved_families;
    std::map<std::string, double> stats;

    friend bool operator==(const ReflectionSummary&, const ReflectionSummary&) = default;
};

struct ReflectionNote {
    std::size_t generation = 0;
    Side side = Side::generator;
    std::string subject;
    std::string parent;
    std::string edit;
    double parent_fitness = 0.0;
    double child_fitness = 0.0;
    double fitness_delta = 0.0;  // child_fitness - parent_fitness
    double suggested_multiplier = 1.0;  // bandit factor for the edit class
    ReflectionSummary summary;
    std::optional<std::string> text;

    friend bool operator==(const ReflectionNote&, const ReflectionNote&) = default;
};

inline Json to_json(const ReflectionNote& r)
{
    Json j = {{"generation", r.generation},
              {"side", std::string(to_string(r.side))},
              {"subject", r.subject},
              {"parent", r.parent},
              {"edit", r.edit},
              {"parent_fitness", r.parent_fitness},
              {"child_fitness", r.child_fitness},
              {"fitness_delta", r.fitness_delta},
              {"suggested_multiplier", r.suggested_multiplier},
              {"summary",
               {{"degraded_families", r.summary.degraded_families},
                {"improved_families", r.summary.improved_families},
                {"stats", r.summary.stats}}}};
    if (r.text) j["text"] = *r.text;
    return j;
}

inline ReflectionNote reflection_from_json(const Json& j)
{
    ReflectionNote r;
    r.generation = j.at("generation").get<std::size_t>();
    r.side = side_from_string(j.at("side").get<std::string>());
    r.subject = j.at("subject").get<std::string>();
    r.parent = j.at("parent").get<std::string>();
    r.edit = j.at("edit").get<std::string>();
    r.parent_fitness = j.at("parent_fitness").get<double>();
    r.child_fitness = j.at("child_fitness").get<double>();
    r.fitness_delta = j.at("fitness_delta").get<double>();
    r.suggested_multiplier = j.at("suggested_multiplier").get<double>();
    const Json& s = j.at("summary");
    r.summary.degraded_families = s.at("degraded_families").get<std::vector<std::string>>();
    r.summary.improved_families = s.at("improved_families").get<std::vector<std::string>>();
    r.summary.stats = s.at("stats").get<std::map<std::string, double>>();
    if (j.contains("text")) r.text = j.at("text").get<std::string>();
    return r;
}

/// One evaluation tagged with the generator family that produced its
/// instances.
struct FamilyReport {
    std::string family;
    GapReport report;
};

/// Model-written commentary for a note (llm mode); returns nothing offline.
using ReflectionTextFn = std::function<std::optional<std::string>(const ReflectionNote&)>;

namespace detail {

inline void check_comparable(const GapReport& a, const GapReport& b)
{
    if (a.task != b.task || a.n != b.n || a.batch != b.batch || a.base_seed != b.base_seed)
        throw ComparisonError("reports differ in task, size or batch seeds");
    for (std::size_t i = 0; i < a.per_instance.size(); ++i) {
        if (a.per_instance[i].seed != b.per_instance[i].seed) throw ComparisonError("reports use different instance seeds");
    }
}

inline double mean_gap(const std::vector<FamilyReport>& reports)
{
    double s = 0.0;
    for (const auto& r : reports) s += r.report.gap;
    return s / static_cast<double>(reports.size());
}

/// Per-instance normalised cost: heuristic over reference.
inline double instance_ratio(const InstanceResult& r) { return r.ref_cost > 0.0 ? r.heur_cost / r.ref_cost : 0.0; }

} // namespace detail

/// Generator fitness is the gap of its (single) report; heuristic fitness the
/// mean gap over its reports.
inline double fitness_of(const std::vector<FamilyReport>& reports) { return detail::mean_gap(reports); }

/// Compares the evaluations of a parent and its child. Reports are paired by
/// position and must share task, size and instance seeds. The child improves
/// when its fitness moves in the side's direction: up for generators
/// (harder), down for heuristics (smaller gap).
inline ReflectionNote reflect(const std::vector<FamilyReport>& parent, const std::vector<FamilyReport>& child, Side side,
                              const ReflectionTextFn& text_fn = {})
{
    if (parent.empty() || parent.size() != child.size()) throw ComparisonError("reflection needs paired, nonempty reports");
    for (std::size_t k = 0; k < parent.size(); ++k) detail::check_comparable(parent[k].report, child[k].report);

    ReflectionNote note;
    note.side = side;
    note.subject = child.front().report.generator_id;
    note.parent = parent.front().report.generator_id;
    if (side == Side::heuristic) {
        note.subject = child.front().report.heuristic_id;
        note.parent = parent.front().report.heuristic_id;
    }
    note.parent_fitness = fitness_of(parent);
    note.child_fitness = fitness_of(child);
    note.fitness_delta = note.child_fitness - note.parent_fitness;
    const double dir = side == Side::generator ? 1.0 : -1.0;
    const double improvement = dir * note.fitness_delta;
    note.suggested_multiplier = improvement > 0.0 ? 1.2 : (improvement < 0.0 ? 0.8 : 1.0);

    // per-instance ratio deltas, bucketed by family in first-seen order
    std::vector<std::string> order;
    std::map<std::string, double> bucket;
    std::size_t better = 0, worse = 0, equal = 0;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < parent.size(); ++k) {
        const std::string& fam = child[k].family;
        if (!bucket.count(fam)) order.push_back(fam);
        for (std::size_t i = 0; i < parent[k].report.per_instance.size(); ++i) {
            const double d = detail::instance_ratio(child[k].report.per_instance[i]) - detail::instance_ratio(parent[k].report.per_instance[i]);
            bucket[fam] += d;
            total += d;
            ++count;
            const double signed_d = dir * d;
            if (signed_d > 0.0) ++better;
            else if (signed_d < 0.0) ++worse;
            else ++equal;
        }
    }
    for (const auto& fam : order) {
        const double signed_d = dir * bucket[fam];
        if (signed_d > 0.0) note.summary.improved_families.push_back(fam);
        if (signed_d < 0.0) note.summary.degraded_families.push_back(fam);
    }
    note.summary.stats = {{"parent_fitness", note.parent_fitness},
                          {"child_fitness", note.child_fitness},
                          {"instances_better", static_cast<double>(better)},
                          {"instances_worse", static_cast<double>(worse)},
                          {"instances_equal", static_cast<double>(equal)},
                          {"mean_ratio_delta", count ? total / static_cast<double>(count) : 0.0}};
    if (text_fn) note.text = text_fn(note);
    return note;
}

inline ReflectionNote reflect(const GapReport& parent, const GapReport& child, Side side, const std::string& family = "all",
                              const ReflectionTextFn& text_fn = {})
{
    return reflect(std::vector<FamilyReport>{{family, parent}}, std::vector<FamilyReport>{{family, child}}, side, text_fn);
}

// ---- population state ------------------------------------------------------

struct GeneratorEntry {
    std::string id;
    std::size_t serial = 0;
    GeneratorProgram program;
    double fitness = 0.0;  // hardness against the champion heuristic of the last MAX phase
    std::string parent;
    std::string edit;
    std::size_t born = 0;
    GapReport report;
};

struct HeuristicEntry {
    std::string id;
    std::size_t serial = 0;
    HeuristicProgram program;
    double fitness = 0.0;  // mean gap over the current top-k generators
    std::string parent;
    std::string edit;
    std::size_t born = 0;
    std::vector<FamilyReport> reports;
};

struct EvolutionState {
    std::size_t generation = 0;
    std::vector<GeneratorEntry> generators;  // ranked, hardest first
    std::vector<HeuristicEntry> heuristics;  // ranked, smallest gap first
    std::string champion_generator;
    std::string champion_heuristic;
    std::vector<std::string> top_generators;  // set the heuristics were last scored on
    std::vector<ReflectionNote> reflections;
    GeneratorMutationWeights generator_weights{};
    HeuristicMutationWeights heuristic_weights{};
    std::size_t next_generator_serial = 1;
    std::size_t next_heuristic_serial = 1;
    std::uint64_t master_seed = 0;
    std::uint64_t eval_seed = 0;
    std::vector<std::string> events;

    const GeneratorEntry& generator(const std::string& id) const
    {
        for (const auto& g : generators)
            if (g.id == id) return g;
        throw ParseError("unknown generator id " + id);
    }

    const HeuristicEntry& heuristic(const std::string& id) const
    {
        for (const auto& h : heuristics)
            if (h.id == id) return h;
        throw ParseError("unknown heuristic id " + id);
    }
};

inline std::string make_program_id(char prefix, std::size_t serial)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%04zu", prefix, serial);
    return buf;
}

template <class Weights>
Json weights_to_json(const Weights& w)
{
    return Json(std::vector<double>(w.values.begin(), w.values.end()));
}

template <class Weights>
Weights weights_from_json(const Json& j)
{
    Weights w;
    const auto v = j.get<std::vector<double>>();
    if (v.size() != w.values.size()) throw ParseError("mutation weight vector has the wrong length");
    std::copy(v.begin(), v.end(), w.values.begin());
    return w;
}

inline Json to_json(const GeneratorEntry& g)
{
    return {{"id", g.id},         {"serial", g.serial}, {"program", to_json(g.program)}, {"fitness", g.fitness},
            {"parent", g.parent}, {"edit", g.edit},     {"born", g.born},                {"report", to_json(g.report)}};
}

inline Json to_json(const HeuristicEntry& h)
{
    Json reports = Json::array();
    for (const auto& r : h.reports) reports.push_back({{"family", r.family}, {"report", to_json(r.report)}});
    return {{"id", h.id},         {"serial", h.serial}, {"program", to_json(h.program)}, {"fitness", h.fitness},
            {"parent", h.parent}, {"edit", h.edit},     {"born", h.born},                {"reports", reports}};
}

inline Json to_json(const EvolutionState& s)
{
    Json gens = Json::array(), heurs = Json::array(), notes = Json::array();
    for (const auto& g : s.generators) gens.push_back(to_json(g));
    for (const auto& h : s.heuristics) heurs.push_back(to_json(h));
    for (const auto& r : s.reflections) notes.push_back(to_json(r));
    return {{"generation", s.generation},
            {"generators", gens},
            {"heuristics", heurs},
            {"champion_generator", s.champion_generator},
            {"champion_heuristic", s.champion_heuristic},
            {"top_generators", s.top_generators},
            {"reflections", notes},
            {"generator_weights", weights_to_json(s.generator_weights)},
            {"heuristic_weights", weights_to_json(s.heuristic_weights)},
            {"next_generator_serial", s.next_generator_serial},
            {"next_heuristic_serial", s.next_heuristic_serial},
            {"master_seed", s.master_seed},
            {"eval_seed", s.eval_seed},
            {"events", s.events}};
}

inline EvolutionState evolution_state_from_json(const Json& j)
{
    EvolutionState s;
    s.generation = j.at("generation").get<std::size_t>();
    for (const auto& g : j.at("generators")) {
        GeneratorEntry e;
        e.id = g.at("id").get<std::string>();
        e.serial = g.at("serial").get<std::size_t>();
        e.program = generator_from_json(g.at("program"));
        e.fitness = g.at("fitness").get<double>();
        e.parent = g.at("parent").get<std::string>();
        e.edit = g.at("edit").get<std::string>();
        e.born = g.at("born").get<std::size_t>();
        e.report = gap_report_from_json(g.at("report"));
        s.generators.push_back(std::move(e));
    }
    for (const auto& h : j.at("heuristics")) {
        HeuristicEntry e;
        e.id = h.at("id").get<std::string>();
        e.serial = h.at("serial").get<std::size_t>();
        e.program = heuristic_from_json(h.at("program"));
        e.fitness = h.at("fitness").get<double>();
        e.parent = h.at("parent").get<std::string>();
        e.edit = h.at("edit").get<std::string>();
        e.born = h.at("born").get<std::size_t>();
        for (const auto& r : h.at("reports")) e.reports.push_back({r.at("family").get<std::string>(), gap_report_from_json(r.at("report"))});
        s.heuristics.push_back(std::move(e));
    }
    s.champion_generator = j.at("champion_generator").get<std::string>();
    s.champion_heuristic = j.at("champion_heuristic").get<std::string>();
    s.top_generators = j.at("top_generators").get<std::vector<std::string>>();
    for (const auto& r : j.at("reflections")) s.reflections.push_back(reflection_from_json(r));
    s.generator_weights = weights_from_json<GeneratorMutationWeights>(j.at("generator_weights"));
    s.heuristic_weights = weights_from_json<HeuristicMutationWeights>(j.at("heuristic_weights"));
    s.next_generator_serial = j.at("next_generator_serial").get<std::size_t>();
    s.next_heuristic_serial = j.at("next_heuristic_serial").get<std::size_t>();
    s.master_seed = j.at("master_seed").get<std::uint64_t>();
    s.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    s.events = j.at("events").get<std::vector<std::string>>();
    return s;
}

// ---- synthesizers ----------------------------------------------------------

/// What a synthesizer sees when asked for a child program.
struct SynthesisRequest {
    Side side = Side::generator;
    Task task = Task::tsp_gls;
    std::size_t n = 0;
    std::string parent_id;
    double parent_fitness = 0.0;
    std::optional<GeneratorProgram> generator;  // set when side == generator
    std::optional<HeuristicProgram> heuristic;  // set when side == heuristic
    SeedValue seed{};
    GeneratorMutationWeights generator_weights{};
    HeuristicMutationWeights heuristic_weights{};
    std::vector<ReflectionNote> recent_reflections;  // newest last
};

struct Proposal {
    std::optional<GeneratorProgram> generator;
    std::optional<HeuristicProgram> heuristic;
    std::string edit;                        // edit-class name, or "llm"
    std::optional<std::size_t> edit_index;   // set when the bandit can credit an edit class
};

/// Source of child programs. Returning nothing makes the engine fall back to
/// an offline mutation for that slot.
class Synthesizer {
public:
    virtual ~Synthesizer() = default;
    virtual std::optional<Proposal> propose(const SynthesisRequest& request) = 0;
    virtual std::optional<std::string> reflection_text(const ReflectionNote&) { return std::nullopt; }
};

inline Proposal offline_proposal(const SynthesisRequest& req)
{
    Proposal p;
    if (req.side == Side::generator) {
        auto m = mutate_generator_traced(*req.generator, req.seed, req.generator_weights);
        p.generator = std::move(m.program);
        p.edit = std::string(to_string(m.edit));
        p.edit_index = static_cast<std::size_t>(m.edit);
    } else {
        auto m = mutate_heuristic_traced(*req.heuristic, req.seed, req.heuristic_weights);
        p.heuristic = std::move(m.program);
        p.edit = std::string(to_string(m.edit));
        p.edit_index = static_cast<std::size_t>(m.edit);
    }
    return p;
}

/// One DSL edit per child, edit class drawn from the bandit weights.
class OfflineSynthesizer : public Synthesizer {
public:
    std::optional<Proposal> propose(const SynthesisRequest& request) override { return offline_proposal(request); }
};

// ---- engine ------------------------------------------------------------------

/// Caches shared across generations: reference values and evaluations of
/// (generator, heuristic) pairs. Programs are immutable under their ids and
/// evaluation seeds are fixed, so reuse never changes a result.
struct EvolutionCaches {
    ReferenceCache references;
    std::map<std::pair<std::string, std::string>, GapReport> pairs;
};

/// Progress callback: (generation, phase label).
using ProgressFn = std::function<void(std::size_t, std::string_view)>;

namespace detail {

inline GapReport evaluate_pair(const EvolutionConfig& cfg, const EvolutionState& st, EvolutionCaches& caches, const GeneratorEntry& g,
                               const HeuristicEntry& h)
{
    const auto key = std::make_pair(g.id, h.id);
    if (auto it = caches.pairs.find(key); it != caches.pairs.end()) return it->second;
    EvalOptions opts;
    opts.budget = cfg.budget;
    opts.cache = &caches.references;
    opts.generator_id = g.id;
    opts.heuristic_id = h.id;
    GapReport r = evaluate_hardness(g.program, h.program, cfg.n, cfg.batch, SeedValue{st.eval_seed}, cfg.task, cfg.reference, opts);
    caches.pairs.emplace(key, r);
    return r;
}

template <class Entry, class Better>
void rank(std::vector<Entry>& v, Better better)
{
    std::stable_sort(v.begin(), v.end(), [&](const Entry& a, const Entry& b) {
        if (a.fitness != b.fitness) return better(a.fitness, b.fitness);
        return a.serial < b.serial;
    });
}

/// Keeps the `elitism` best parents, fills the remaining slots with the best
/// offspring, and tops up from the remaining parents if offspring run short.
template <class Entry, class Better>
std::vector<Entry> select(std::vector<Entry> parents, std::vector<Entry> offspring, std::size_t pop, std::size_t elitism, Better better)
{
    rank(parents, better);
    rank(offspring, better);
    std::vector<Entry> out;
    std::size_t p = 0;
    for (; p < std::min(elitism, parents.size()) && out.size() < pop; ++p) out.push_back(parents[p]);
    for (std::size_t o = 0; o < offspring.size() && out.size() < pop; ++o) out.push_back(offspring[o]);
    for (; p < parents.size() && out.size() < pop; ++p) out.push_back(parents[p]);
    rank(out, better);
    return out;
}

inline bool harder(double a, double b) { return a > b; }
inline bool smaller(double a, double b) { return a < b; }

inline std::vector<ReflectionNote> recent_notes(const EvolutionState& st, Side side, std::size_t k)
{
    std::vector<ReflectionNote> out;
    for (auto it = st.reflections.rbegin(); it != st.reflections.rend() && out.size() < k; ++it)
        if (it->side == side) out.push_back(*it);
    std::reverse(out.begin(), out.end());
    return out;
}

inline std::optional<Proposal> request_child(Synthesizer& synth, const SynthesisRequest& req, EvolutionState& st)
{
    std::optional<Proposal> p;
    try {
        p = synth.propose(req);
    } catch (const std::exception& e) {
        st.events.push_back("generation " + std::to_string(st.generation) + ": synthesizer error for " + req.parent_id + ": " + e.what());
        p.reset();
    }
    bool ok = p.has_value();
    if (ok && req.side == Side::generator) ok = p->generator && is_valid(*p->generator) && !(*p->generator == *req.generator);
    if (ok && req.side == Side::heuristic)
        ok = p->heuristic && is_valid(*p->heuristic) && p->heuristic->target == req.heuristic->target && !(*p->heuristic == *req.heuristic);
    if (!ok) {
        st.events.push_back("generation " + std::to_string(st.generation) + ": offline fallback for child of " + req.parent_id);
        return offline_proposal(req);
    }
    return p;
}

inline std::vector<FamilyReport> score_heuristic(const EvolutionConfig& cfg, const EvolutionState& st, EvolutionCaches& caches,
                                                 const HeuristicEntry& h)
{
    std::vector<FamilyReport> out;
    for (const auto& gid : st.top_generators) {
        const GeneratorEntry& g = st.generator(gid);
        out.push_back({generator_family(g.program.root), evaluate_pair(cfg, st, caches, g, h)});
    }
    return out;
}

inline void refresh_top_generators(EvolutionState& st, std::size_t k)
{
    st.top_generators.clear();
    for (std::size_t i = 0; i < std::min(k, st.generators.size()); ++i) st.top_generators.push_back(st.generators[i].id);
    st.champion_generator = st.generators.front().id;
}

inline void apply_bandit(EvolutionState& st, Side side, const Proposal& p, const ReflectionNote& note)
{
    if (!p.edit_index) return;
    const double improvement = (side == Side::generator ? 1.0 : -1.0) * note.fitness_delta;
    if (side == Side::generator) {
        double& w = st.generator_weights.values[*p.edit_index];
        w = bandit_update(w, improvement);
    } else {
        double& w = st.heuristic_weights.values[*p.edit_index];
        w = bandit_update(w, improvement);
    }
}

} // namespace detail

/// Generation 0: the canonical uniform generator and the baseline heuristic
/// plus random programs. Generators are scored against the baseline
/// heuristic, heuristics against the resulting top-k generators.
inline EvolutionState initial_state(const EvolutionConfig& cfg, EvolutionCaches& caches, const ProgressFn& progress = {})
{
    validate(cfg);
    EvolutionState st;
    const SeedValue master = root_seed(cfg.master_seed.value, "master");
    st.master_seed = master.value;
    st.eval_seed = derive_seed(master, "eval").value;
    const SeedValue init = derive_seed(master, "init");
    const ProblemKind kind = task_kind(cfg.task);
    const HeuristicTarget target = task_target(cfg.task);

    for (std::size_t i = 0; i < cfg.pop_heur; ++i) {
        HeuristicEntry h;
        h.serial = st.next_heuristic_serial++;
        h.id = make_program_id('H', h.serial);
        h.program = i == 0 ? baseline_heuristic(target) : random_heuristic(derive_seed(init, "heuristic/" + std::to_string(i)), target);
        h.edit = i == 0 ? "baseline" : "random";
        st.heuristics.push_back(std::move(h));
    }
    for (std::size_t i = 0; i < cfg.pop_gen; ++i) {
        GeneratorEntry g;
        g.serial = st.next_generator_serial++;
        g.id = make_program_id('G', g.serial);
        if (i == 0) {
            g.program = canonical_uniform();
            if (kind == ProblemKind::op) {
                g.program.prize_rule = PrizeRule{};
                g.program.budget_rule = BudgetRule{};
            }
        } else {
            g.program = random_generator(derive_seed(init, "generator/" + std::to_string(i)), kind);
        }
        g.edit = i == 0 ? "canonical" : "random";
        if (progress) progress(0, "init:" + g.id);
        g.report = detail::evaluate_pair(cfg, st, caches, g, st.heuristics.front());
        g.fitness = g.report.gap;
        st.generators.push_back(std::move(g));
    }
    detail::rank(st.generators, detail::harder);
    detail::refresh_top_generators(st, cfg.top_k);
    for (auto& h : st.heuristics) {
        if (progress) progress(0, "init:" + h.id);
        h.reports = detail::score_heuristic(cfg, st, caches, h);
        h.fitness = fitness_of(h.reports);
    }
    detail::rank(st.heuristics, detail::smaller);
    st.champion_heuristic = st.heuristics.front().id;
    return st;
}

/// One alternation: MAX phase on generators against the champion heuristic
/// (parents are rescored first, so every fitness in the phase refers to the
/// same opponent), then MIN phase on heuristics against the new top-k
/// generators. Every
/// child gets a reflection note; the edit class that produced it has its
/// weight moved by the bandit rule.
inline EvolutionState step_generation(const EvolutionState& prev, const EvolutionConfig& cfg, Synthesizer& synth, EvolutionCaches& caches,
                                      const ProgressFn& progress = {})
{
    validate(cfg);
    EvolutionState st = prev;
    st.generation = prev.generation + 1;
    const SeedValue gseed = derive_seed(derive_seed(SeedValue{st.master_seed}, "generation"), std::to_string(st.generation));
    const bool llm_text = cfg.synthesizer == SynthesizerKind::llm;

    // MAX phase
    const HeuristicEntry champion = st.heuristic(st.champion_heuristic);
    const GeneratorMutationWeights gen_weights = st.generator_weights;
    std::vector<GeneratorEntry> gparents = prev.generators;
    for (auto& g : gparents) {
        if (progress) progress(st.generation, "rescore:" + g.id);
        g.report = detail::evaluate_pair(cfg, st, caches, g, champion);
        g.fitness = g.report.gap;
    }
    std::vector<GeneratorEntry> children;
    std::vector<std::pair<ReflectionNote, Proposal>> gen_notes;
    for (const GeneratorEntry& parent : gparents) {
        for (std::size_t j = 0; j < cfg.offspring_per_parent; ++j) {
            SynthesisRequest req;
            req.side = Side::generator;
            req.task = cfg.task;
            req.n = cfg.n;
            req.parent_id = parent.id;
            req.parent_fitness = parent.fitness;
            req.generator = parent.program;
            req.seed = derive_seed(gseed, "max/" + parent.id + "/" + std::to_string(j));
            req.generator_weights = gen_weights;
            req.recent_reflections = detail::recent_notes(st, Side::generator, cfg.connector.reflection_count);
            const Proposal prop = *detail::request_child(synth, req, st);

            GeneratorEntry child;
            child.serial = st.next_generator_serial++;
            child.id = make_program_id('G', child.serial);
            child.program = *prop.generator;
            child.parent = parent.id;
            child.edit = prop.edit;
            child.born = st.generation;
            if (progress) progress(st.generation, "max:" + child.id);
            try {
                child.report = detail::evaluate_pair(cfg, st, caches, child, champion);
            } catch (const EvaluationError& e) {
                st.events.push_back("generation " + std::to_string(st.generation) + ": " + child.id + " discarded: " + e.what());
                continue;
            }
            child.fitness = child.report.gap;
            ReflectionNote note = reflect({{generator_family(parent.program.root), parent.report}},
                                          {{generator_family(child.program.root), child.report}}, Side::generator);
            note.edit = prop.edit;
            note.generation = st.generation;
            if (llm_text) note.text = synth.reflection_text(note);
            gen_notes.emplace_back(std::move(note), prop);
            children.push_back(std::move(child));
        }
    }
    for (auto& [note, prop] : gen_notes) {
        detail::apply_bandit(st, Side::generator, prop, note);
        st.reflections.push_back(std::move(note));
    }
    st.generators = detail::select(std::move(gparents), std::move(children), cfg.pop_gen, cfg.elitism, detail::harder);
    detail::refresh_top_generators(st, cfg.top_k);

    // MIN phase
    std::vector<HeuristicEntry> parents = prev.heuristics;
    for (auto& h : parents) {
        if (progress) progress(st.generation, "rescore:" + h.id);
        h.reports = detail::score_heuristic(cfg, st, caches, h);
        h.fitness = fitness_of(h.reports);
    }
    const HeuristicMutationWeights heur_weights = st.heuristic_weights;
    std::vector<HeuristicEntry> hchildren;
    std::vector<std::pair<ReflectionNote, Proposal>> heur_notes;
    for (const HeuristicEntry& parent : parents) {
        for (std::size_t j = 0; j < cfg.offspring_per_parent; ++j) {
            SynthesisRequest req;
            req.side = Side::heuristic;
            req.task = cfg.task;
            req.n = cfg.n;
            req.parent_id = parent.id;
            req.parent_fitness = parent.fitness;
            req.heuristic = parent.program;
            req.seed = derive_seed(gseed, "min/" + parent.id + "/" + std::to_string(j));
            req.heuristic_weights = heur_weights;
            req.recent_reflections = detail::recent_notes(st, Side::heuristic, cfg.connector.reflection_count);
            const Proposal prop = *detail::request_child(synth, req, st);

            HeuristicEntry child;
            child.serial = st.next_heuristic_serial++;
            child.id = make_program_id('H', child.serial);
            child.program = *prop.heuristic;
            child.parent = parent.id;
            child.edit = prop.edit;
            child.born = st.generation;
            if (progress) progress(st.generation, "min:" + child.id);
            try {
                child.reports = detail::score_heuristic(cfg, st, caches, child);
            } catch (const EvaluationError& e) {
                st.events.push_back("generation " + std::to_string(st.generation) + ": " + child.id + " discarded: " + e.what());
                continue;
            }
            child.fitness = fitness_of(child.reports);
            ReflectionNote note = reflect(parent.reports, child.reports, Side::heuristic);
            note.edit = prop.edit;
            note.generation = st.generation;
            if (llm_text) note.text = synth.reflection_text(note);
            heur_notes.emplace_back(std::move(note), prop);
            hchildren.push_back(std::move(child));
        }
    }
    for (auto& [note, prop] : heur_notes) {
        detail::apply_bandit(st, Side::heuristic, prop, note);
        st.reflections.push_back(std::move(note));
    }
    st.heuristics = detail::select(std::move(parents), std::move(hchildren), cfg.pop_heur, cfg.elitism, detail::smaller);
    st.champion_heuristic = st.heuristics.front().id;
    return st;
}

// ---- run directory -----------------------------------------------------------

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ParseError("cannot write " + p.string());
    out << text;
}

inline std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string generation_dir(std::size_t k) { return "gen_" + std::to_string(k); }

inline std::string curve_row(const EvolutionState& st)
{
    return std::to_string(st.generation) + "," + format_real(st.generator(st.champion_generator).fitness) + "," +
           format_real(st.heuristic(st.champion_heuristic).fitness);
}

} // namespace detail

inline constexpr const char* curve_csv_header = "generation,champion_hardness,champion_gap";

/// Persists one generation: programs, fitness table, this generation's
/// reflections and the full state (used for resume).
inline void persist_generation(const std::filesystem::path& run_dir, const EvolutionState& st, std::size_t first_new_reflection)
{
    namespace fs = std::filesystem;
    const fs::path dir = run_dir / detail::generation_dir(st.generation);
    fs::create_directories(dir);
    Json gens = Json::array(), heurs = Json::array();
    std::string csv = "side,id,parent,edit,born,fitness\n";
    for (const auto& g : st.generators) {
        gens.push_back({{"id", g.id}, {"program", to_json(g.program)}});
        csv += "generator," + g.id + "," + g.parent + "," + g.edit + "," + std::to_string(g.born) + "," + format_real(g.fitness) + "\n";
    }
    for (const auto& h : st.heuristics) {
        heurs.push_back({{"id", h.id}, {"program", to_json(h.program)}});
        csv += "heuristic," + h.id + "," + h.parent + "," + h.edit + "," + std::to_string(h.born) + "," + format_real(h.fitness) + "\n";
    }
    detail::write_text(dir / "generators.json", gens.dump(2) + "\n");
    detail::write_text(dir / "heuristics.json", heurs.dump(2) + "\n");
    detail::write_text(dir / "fitness.csv", csv);
    std::string lines;
    for (std::size_t i = first_new_reflection; i < st.reflections.size(); ++i) lines += to_json(st.reflections[i]).dump() + "\n";
    detail::write_text(dir / "reflections.jsonl", lines);
    // state last: its presence marks the generation as complete
    detail::write_text(dir / "state.json", to_json(st).dump() + "\n");
}

inline void persist_summary(const std::filesystem::path& run_dir, const std::vector<std::string>& curve_rows, const EvolutionState& st)
{
    std::string curve = std::string(curve_csv_header) + "\n";
    for (const auto& r : curve_rows) curve += r + "\n";
    detail::write_text(run_dir / "curve.csv", curve);
    const auto& g = st.generator(st.champion_generator);
    const auto& h = st.heuristic(st.champion_heuristic);
    const Json champions = {{"generation", st.generation},
                            {"champion_generator", {{"id", g.id}, {"fitness", g.fitness}, {"program", to_json(g.program)}}},
                            {"champion_heuristic", {{"id", h.id}, {"fitness", h.fitness}, {"program", to_json(h.program)}}},
                            {"top_generators", st.top_generators}};
    detail::write_text(run_dir / "champions.json", champions.dump(2) + "\n");
    std::string events;
    for (const auto& e : st.events) events += Json(e).dump() + "\n";
    detail::write_text(run_dir / "events.jsonl", events);
}

inline EvolutionState load_generation(const std::filesystem::path& run_dir, std::size_t k)
{
    return evolution_state_from_json(Json::parse(detail::read_text(run_dir / detail::generation_dir(k) / "state.json")));
}

/// Highest generation with a complete state file, if any.
inline std::optional<std::size_t> last_persisted_generation(const std::filesystem::path& run_dir)
{
    std::optional<std::size_t> best;
    for (std::size_t k = 0;; ++k) {
        if (!std::filesystem::exists(run_dir / detail::generation_dir(k) / "state.json")) break;
        best = k;
    }
    return best;
}

struct RunArtifacts {
    EvolutionState state;
    std::vector<std::string> curve;  // csv rows without header
    std::filesystem::path run_dir;
};

/// Runs `generations` alternations, persisting after each. With an existing
/// run directory whose config matches, continues from the last complete
/// generation.
inline RunArtifacts run_coevolution(const EvolutionConfig& cfg, const std::filesystem::path& run_dir, Synthesizer& synth,
                                    const ProgressFn& progress = {})
{
    namespace fs = std::filesystem;
    validate(cfg);
    fs::create_directories(run_dir);
    const std::string cfg_text = to_json(cfg).dump(2) + "\n";
    const fs::path cfg_path = run_dir / "config.json";
    EvolutionCaches caches;
    RunArtifacts art;
    art.run_dir = run_dir;

    std::optional<std::size_t> resume = last_persisted_generation(run_dir);
    if (resume) {
        // only the generation count may change between a run and its resumption
        Json stored = fs::exists(cfg_path) ? Json::parse(detail::read_text(cfg_path)) : Json::object();
        Json wanted = to_json(cfg);
        stored.erase("generations");
        wanted.erase("generations");
        if (stored != wanted) throw ParseError("run directory " + run_dir.string() + " holds a different configuration");
    }
    detail::write_text(cfg_path, cfg_text);

    EvolutionState st;
    if (resume) {
        for (std::size_t k = 0; k <= *resume; ++k) art.curve.push_back(detail::curve_row(load_generation(run_dir, k)));
        st = load_generation(run_dir, *resume);
    } else {
        st = initial_state(cfg, caches, progress);
        persist_generation(run_dir, st, 0);
        art.curve.push_back(detail::curve_row(st));
    }
    persist_summary(run_dir, art.curve, st);
    while (st.generation < cfg.generations) {
        const std::size_t before = st.reflections.size();
        st = step_generation(st, cfg, synth, caches, progress);
        persist_generation(run_dir, st, before);
        art.curve.push_back(detail::curve_row(st));
        persist_summary(run_dir, art.curve, st);
    }
    art.state = std::move(st);
    return art;
}

inline RunArtifacts run_coevolution(const EvolutionConfig& cfg, const std::filesystem::path& run_dir, const ProgressFn& progress = {})
{
    OfflineSynthesizer offline;
    return run_coevolution(cfg, run_dir, offline, progress);
}

} // namespace ealg
