#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ealg/evolution.hpp"

using namespace ealg;
namespace fs = std::filesystem;

namespace {

GapReport fake_report(const std::string& gen, const std::string& heur, std::vector<double> heur_costs, std::vector<double> ref_costs)
{
    GapReport r;
    r.generator_id = gen;
    r.heuristic_id = heur;
    r.task = Task::tsp_gls;
    r.n = 50;
    r.batch = heur_costs.size();
    r.base_seed = 11;
    double sh = 0, sr = 0;
    for (std::size_t i = 0; i < heur_costs.size(); ++i) {
        r.per_instance.push_back({11 + i, heur_costs[i], ref_costs[i]});
        sh += heur_costs[i];
        sr += ref_costs[i];
    }
    r.mean_heur_cost = sh / heur_costs.size();
    r.mean_ref_cost = sr / heur_costs.size();
    r.gap = compute_gap(heur_costs, ref_costs);
    return r;
}

EvolutionConfig small_config(std::size_t generations = 2)
{
    EvolutionConfig c;
    c.task = Task::tsp_gls;
    c.n = 12;  // exact references keep the suite fast
    c.batch = 3;
    c.pop_gen = 4;
    c.pop_heur = 4;
    c.generations = generations;
    c.offspring_per_parent = 1;
    c.elitism = 1;
    c.top_k = 2;
    c.master_seed = SeedValue{7};
    c.budget.gls.budget_ls_iters = 150;
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ealg-test-" + name))
    {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(Reflect, HarderChildRaisesWeight)
{
    // parent gap 0.04, child gap 0.10 on the same seeds
    const GapReport parent = fake_report("G0001", "H0001", {1.04, 2.08}, {1.0, 2.0});
    const GapReport child = fake_report("G0009", "H0001", {1.10, 2.20}, {1.0, 2.0});
    const ReflectionNote n = reflect(parent, child, Side::generator, "ring");
    EXPECT_NEAR(n.parent_fitness, 0.04, 1e-12);
    EXPECT_NEAR(n.child_fitness, 0.10, 1e-12);
    EXPECT_NEAR(n.fitness_delta, 0.06, 1e-12);
    EXPECT_EQ(n.suggested_multiplier, 1.2);
    EXPECT_EQ(n.subject, "G0009");
    EXPECT_EQ(n.parent, "G0001");
    EXPECT_EQ(n.summary.improved_families, std::vector<std::string>{"ring"});
    EXPECT_TRUE(n.summary.degraded_families.empty());
    EXPECT_EQ(n.summary.stats.at("instances_better"), 2.0);

    // the same move seen from the heuristic side is a regression
    const ReflectionNote h = reflect(parent, child, Side::heuristic, "ring");
    EXPECT_EQ(h.suggested_multiplier, 0.8);
    EXPECT_EQ(h.summary.degraded_families, std::vector<std::string>{"ring"});
}

TEST(Reflect, IdenticalReportsAreNeutral)
{
    const GapReport r = fake_report("G0002", "H0003", {1.5, 3.0, 2.2}, {1.2, 2.9, 2.0});
    const ReflectionNote n = reflect(r, r, Side::heuristic);
    EXPECT_EQ(n.fitness_delta, 0.0);
    EXPECT_EQ(n.suggested_multiplier, 1.0);
    EXPECT_TRUE(n.summary.improved_families.empty());
    EXPECT_TRUE(n.summary.degraded_families.empty());
    EXPECT_EQ(n.summary.stats.at("instances_equal"), 3.0);
    EXPECT_FALSE(n.text.has_value());
}

TEST(Reflect, FamiliesBucketedAcrossReports)
{
    const std::vector<FamilyReport> parent{{"grid", fake_report("G1", "H1", {1.2}, {1.0})},
                                           {"spiral", fake_report("G2", "H1", {1.1}, {1.0})}};
    const std::vector<FamilyReport> child{{"grid", fake_report("G1", "H2", {1.05}, {1.0})},
                                          {"spiral", fake_report("G2", "H2", {1.3}, {1.0})}};
    const ReflectionNote n = reflect(parent, child, Side::heuristic);
    EXPECT_EQ(n.summary.improved_families, std::vector<std::string>{"grid"});
    EXPECT_EQ(n.summary.degraded_families, std::vector<std::string>{"spiral"});
    EXPECT_NEAR(n.fitness_delta, (0.05 + 0.3) / 2 - (0.2 + 0.1) / 2, 1e-12);
    EXPECT_EQ(reflection_from_json(Json::parse(to_json(n).dump())), n);
}

TEST(Reflect, MismatchedReportsRejected)
{
    const GapReport a = fake_report("G1", "H1", {1.2, 1.1}, {1.0, 1.0});
    GapReport b = a;
    b.per_instance[1].seed = 99;
    EXPECT_THROW(reflect(a, b, Side::generator), ComparisonError);
    GapReport c = a;
    c.n = 51;
    EXPECT_THROW(reflect(a, c, Side::generator), ComparisonError);
    EXPECT_THROW(reflect(std::vector<FamilyReport>{}, std::vector<FamilyReport>{}, Side::generator), ComparisonError);
}

TEST(EvolutionConfigIo, RoundTripAndValidation)
{
    EvolutionConfig c = small_config();
    c.connector.api_key_env = "MY_KEY_VAR";
    c.reference.estimator = GapEstimator::mean_of_ratios;
    EXPECT_TRUE(evolution_config_from_json(Json::parse(to_json(c).dump())) == c);
    c.elitism = 4;
    EXPECT_THROW(validate(c), ParseError);
    EvolutionConfig d = small_config();
    d.n = 3;
    EXPECT_THROW(validate(d), ParseError);
}

TEST(Evolution, PopulationInvariants)
{
    TempDir dir("invariants");
    const EvolutionConfig cfg = small_config(3);
    const RunArtifacts run = run_coevolution(cfg, dir.path);
    const EvolutionState& st = run.state;
    EXPECT_EQ(st.generation, 3u);
    EXPECT_EQ(st.generators.size(), cfg.pop_gen);
    EXPECT_EQ(st.heuristics.size(), cfg.pop_heur);
    ASSERT_EQ(run.curve.size(), 4u);

    std::set<std::string> ids;
    for (const auto& g : st.generators) EXPECT_TRUE(ids.insert(g.id).second);
    for (const auto& h : st.heuristics) EXPECT_TRUE(ids.insert(h.id).second);
    for (std::size_t i = 1; i < st.generators.size(); ++i) EXPECT_GE(st.generators[i - 1].fitness, st.generators[i].fitness);
    for (std::size_t i = 1; i < st.heuristics.size(); ++i) EXPECT_LE(st.heuristics[i - 1].fitness, st.heuristics[i].fitness);
    EXPECT_EQ(st.champion_generator, st.generators.front().id);
    EXPECT_EQ(st.champion_heuristic, st.heuristics.front().id);
    EXPECT_EQ(st.top_generators.size(), cfg.top_k);

    // one note per surviving child: 4 generator + 4 heuristic children per generation
    EXPECT_EQ(st.reflections.size() + st.events.size(), 3u * 8u);
    for (const auto& n : st.reflections) {
        EXPECT_NEAR(n.fitness_delta, n.child_fitness - n.parent_fitness, 0.0);
        EXPECT_FALSE(n.edit.empty());
    }
    for (double w : st.generator_weights.values) {
        EXPECT_GE(w, 0.25);
        EXPECT_LE(w, 4.0);
    }

    for (const char* f : {"config.json", "champions.json", "curve.csv", "events.jsonl", "gen_0/state.json", "gen_3/generators.json",
                          "gen_3/heuristics.json", "gen_3/fitness.csv", "gen_3/reflections.jsonl"})
        EXPECT_TRUE(fs::exists(dir.path / f)) << f;
    EXPECT_EQ(slurp(dir.path / "curve.csv").substr(0, 42), "generation,champion_hardness,champion_gap\n");
}

TEST(Evolution, ChampionHardnessMonotoneWithinEachMaxPhase)
{
    // 50 generations: after each MAX phase the champion generator is at least
    // as hard as every parent rescored against that phase's opponent
    EvolutionConfig cfg = small_config(50);
    cfg.batch = 2;
    cfg.pop_gen = 3;
    cfg.pop_heur = 2;
    cfg.top_k = 1;
    cfg.budget.gls.budget_ls_iters = 40;
    EvolutionCaches caches;
    OfflineSynthesizer synth;
    EvolutionState st = initial_state(cfg, caches);
    for (std::size_t k = 0; k < cfg.generations; ++k) {
        const HeuristicProgram opponent = st.heuristic(st.champion_heuristic).program;
        double best_parent = -1e300;
        for (const auto& g : st.generators) {
            const GapReport r = evaluate_hardness(g.program, opponent, cfg.n, cfg.batch, SeedValue{st.eval_seed}, cfg.task, cfg.reference,
                                                  EvalOptions{cfg.budget, nullptr, {}, {}});
            best_parent = std::max(best_parent, r.gap);
        }
        st = step_generation(st, cfg, synth, caches);
        ASSERT_GE(st.generator(st.champion_generator).fitness, best_parent) << "generation " << st.generation;
        for (const auto& g : st.generators) ASSERT_TRUE(std::isfinite(g.fitness));
        for (const auto& h : st.heuristics) ASSERT_TRUE(std::isfinite(h.fitness));
    }
}

TEST(Evolution, ChampionHeuristicMonotoneOnFrozenPool)
{
    // within a MIN phase the pool is fixed: the new champion's gap on it is no
    // worse than any parent's gap on the same pool
    const EvolutionConfig cfg = small_config(4);
    EvolutionCaches caches;
    OfflineSynthesizer synth;
    EvolutionState st = initial_state(cfg, caches);
    for (std::size_t k = 0; k < cfg.generations; ++k) {
        const EvolutionState next = step_generation(st, cfg, synth, caches);
        double best_parent = 1e300;
        for (const auto& h : st.heuristics) {
            double sum = 0.0;
            for (const auto& gid : next.top_generators) {
                const GapReport r = evaluate_hardness(next.generator(gid).program, h.program, cfg.n, cfg.batch, SeedValue{st.eval_seed},
                                                      cfg.task, cfg.reference, EvalOptions{cfg.budget, nullptr, {}, {}});
                sum += r.gap;
            }
            best_parent = std::min(best_parent, sum / static_cast<double>(next.top_generators.size()));
        }
        EXPECT_LE(next.heuristic(next.champion_heuristic).fitness, best_parent + 1e-15);
        st = next;
    }
}

TEST(Evolution, ZeroGenerationsKeepsSeededChampions)
{
    TempDir dir("zero");
    EvolutionConfig cfg = small_config(0);
    const RunArtifacts run = run_coevolution(cfg, dir.path);
    ASSERT_EQ(run.curve.size(), 1u);
    const auto& champ = run.state.generator(run.state.champion_generator);
    const GapReport direct = evaluate_hardness(champ.program, baseline_heuristic(HeuristicTarget::gls_guide), cfg.n, cfg.batch,
                                               SeedValue{run.state.eval_seed}, cfg.task, cfg.reference, EvalOptions{cfg.budget, nullptr, {}, {}});
    EXPECT_EQ(champ.fitness, direct.gap);
    EXPECT_TRUE(std::any_of(run.state.generators.begin(), run.state.generators.end(), [](const GeneratorEntry& g) { return g.edit == "canonical"; }));
    EXPECT_TRUE(std::any_of(run.state.heuristics.begin(), run.state.heuristics.end(), [](const HeuristicEntry& h) { return h.edit == "baseline"; }));
}

TEST(Evolution, ArtifactsCarryNoSecretsOrClock)
{
    TempDir dir("secrets");
    EvolutionConfig cfg = small_config(1);
    cfg.connector.api_key_env = "EALG_TEST_KEY_NAME";
    ::setenv("EALG_TEST_KEY_NAME", "sk-do-not-write-this", 1);
    run_coevolution(cfg, dir.path);
    bool saw_name = false;
    for (const auto& e : fs::recursive_directory_iterator(dir.path)) {
        if (!e.is_regular_file()) continue;
        const std::string text = slurp(e.path());
        EXPECT_EQ(text.find("sk-do-not-write-this"), std::string::npos) << e.path();
        EXPECT_EQ(text.find("wall_ms"), std::string::npos) << e.path();
        if (text.find("EALG_TEST_KEY_NAME") != std::string::npos) saw_name = true;
    }
    EXPECT_TRUE(saw_name);
    ::unsetenv("EALG_TEST_KEY_NAME");
}

TEST(Evolution, DeterministicAcrossRunsAndThreads)
{
    TempDir a("det-a"), b("det-b");
    const EvolutionConfig cfg = small_config(2);
    set_worker_count(1);
    const RunArtifacts ra = run_coevolution(cfg, a.path);
    set_worker_count(3);
    const RunArtifacts rb = run_coevolution(cfg, b.path);
    set_worker_count(0);
    EXPECT_EQ(to_json(ra.state).dump(), to_json(rb.state).dump());
    EXPECT_EQ(slurp(a.path / "curve.csv"), slurp(b.path / "curve.csv"));
    EXPECT_EQ(slurp(a.path / "gen_2/reflections.jsonl"), slurp(b.path / "gen_2/reflections.jsonl"));

    TempDir c("det-c");
    EvolutionConfig other = cfg;
    other.master_seed = SeedValue{8};
    EXPECT_NE(to_json(run_coevolution(other, c.path).state).dump(), to_json(ra.state).dump());
}

TEST(Evolution, ResumeMatchesUninterruptedRun)
{
    TempDir full("resume-full"), part("resume-part");
    const RunArtifacts straight = run_coevolution(small_config(3), full.path);
    run_coevolution(small_config(1), part.path);
    EXPECT_EQ(last_persisted_generation(part.path), std::optional<std::size_t>{1});
    const RunArtifacts resumed = run_coevolution(small_config(3), part.path);
    EXPECT_EQ(to_json(resumed.state).dump(), to_json(straight.state).dump());
    EXPECT_EQ(slurp(part.path / "curve.csv"), slurp(full.path / "curve.csv"));

    EvolutionConfig changed = small_config(3);
    changed.batch = 4;
    EXPECT_THROW(run_coevolution(changed, part.path), ParseError);
}

TEST(Evolution, AllRandomnessDescendsFromMasterSeed)
{
    TempDir dir("audit");
    RngAudit audit;
    {
        ScopedRngAudit guard(audit);
        run_coevolution(small_config(1), dir.path);
    }
    std::set<std::uint64_t> reachable;
    for (const auto& r : audit.roots()) reachable.insert(r.child);
    const auto derivations = audit.derivations();
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& d : derivations)
            if (reachable.count(d.parent) && reachable.insert(d.child).second) grew = true;
    }
    std::set<std::string> root_labels;
    for (const auto& r : audit.roots()) root_labels.insert(r.label);
    EXPECT_TRUE(root_labels.count("master"));
    for (const auto& r : audit.roots()) {
        // the only non-master roots are the fixed reference restart seeds
        if (r.label != "master") EXPECT_EQ(r.label, "reference-gls");
    }
    ASSERT_FALSE(audit.engines().empty());
    for (std::uint64_t e : audit.engines()) EXPECT_TRUE(reachable.count(e)) << e;
}

namespace {

class ScriptedSynthesizer : public Synthesizer {
public:
    std::size_t calls = 0;
    std::optional<Proposal> propose(const SynthesisRequest& req) override
    {
        ++calls;
        if (calls % 2 == 0) return std::nullopt;  // every other request falls back
        Proposal p = offline_proposal(req);
        p.edit = "scripted";
        p.edit_index.reset();
        return p;
    }
    std::optional<std::string> reflection_text(const ReflectionNote& n) override { return "note on " + n.subject; }
};

} // namespace

TEST(Evolution, SynthesizerFallbackIsLogged)
{
    TempDir dir("fallback");
    EvolutionConfig cfg = small_config(1);
    cfg.synthesizer = SynthesizerKind::llm;
    ScriptedSynthesizer synth;
    const RunArtifacts run = run_coevolution(cfg, dir.path, synth);
    EXPECT_EQ(synth.calls, 8u);
    std::size_t fallbacks = 0;
    for (const auto& e : run.state.events)
        if (e.find("offline fallback") != std::string::npos) ++fallbacks;
    EXPECT_EQ(fallbacks, 4u);
    for (const auto& n : run.state.reflections) {
        ASSERT_TRUE(n.text.has_value());
        EXPECT_EQ(*n.text, "note on " + n.subject);
    }
    // scripted children carry no edit class, so only fallback children move the weights
    EXPECT_TRUE(std::any_of(run.state.reflections.begin(), run.state.reflections.end(),
                            [](const ReflectionNote& n) { return n.edit == "scripted"; }));
}
