#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ealg/evolution.hpp"
#include "ealg/llm.hpp"
#include "ealg/llm_http.hpp"
#include "ealg/report.hpp"
#include "ealg/tsplib.hpp"

namespace ealg {

namespace cli {

namespace fs = std::filesystem;

inline Json read_json(const fs::path& p) { return Json::parse(read_file(p)); }

inline void write_or_print(const std::string& text, const std::string& out_path, std::ostream& out)
{
    if (out_path.empty() || out_path == "-") {
        out << text;
        return;
    }
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw ParseError("cannot write " + out_path);
    f << text;
}

inline HeuristicProgram load_heuristic(const std::string& path, Task task)
{
    if (path.empty()) return baseline_heuristic(task_target(task));
    return heuristic_from_json(read_json(path));
}

/// Instance files of a directory in name order.
inline std::vector<Instance> load_instances(const std::vector<std::string>& paths)
{
    std::vector<fs::path> files;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> in_dir;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".json") in_dir.push_back(e.path());
            std::sort(in_dir.begin(), in_dir.end());
            files.insert(files.end(), in_dir.begin(), in_dir.end());
        } else {
            files.emplace_back(p);
        }
    }
    if (files.empty()) throw ParseError("no instance files found");
    std::vector<Instance> out;
    for (const auto& f : files) out.push_back(instance_from_json(read_json(f)));
    return out;
}

struct BudgetFlags {
    std::size_t gls_iters = GlsParams{}.budget_ls_iters;
    std::size_t aco_iters = AcoParams{}.iterations;
    std::size_t ants = 0;

    void add(CLI::App& app)
    {
        app.add_option("--gls-iters", gls_iters, "GLS budget in node-neighbourhood scans")->capture_default_str();
        app.add_option("--aco-iters", aco_iters, "ACO iterations")->capture_default_str();
        app.add_option("--ants", ants, "ACO colony size (0 = min(n, 30))")->capture_default_str();
    }

    SolverBudget budget() const
    {
        SolverBudget b;
        b.gls.budget_ls_iters = gls_iters;
        b.aco.iterations = aco_iters;
        b.aco.n_ants = ants;
        return b;
    }
};

struct PolicyFlags {
    std::size_t exact_threshold = ReferencePolicy{}.exact_threshold;
    double multiplier = ReferencePolicy{}.ref_budget_multiplier;
    std::string estimator = "ratio_of_means";

    void add(CLI::App& app)
    {
        app.add_option("--exact-threshold", exact_threshold, "largest n solved exactly for the reference")->capture_default_str();
        app.add_option("--ref-multiplier", multiplier, "reference budget as a multiple of the default")->capture_default_str();
        app.add_option("--estimator", estimator, "ratio_of_means | mean_of_ratios")->capture_default_str();
    }

    ReferencePolicy policy() const
    {
        ReferencePolicy p;
        p.exact_threshold = exact_threshold;
        p.ref_budget_multiplier = multiplier;
        p.estimator = estimator_from_string(estimator);
        validate(p);
        return p;
    }
};

inline GeneratorProgram pick_generator(bool uniform, const std::string& path)
{
    if (!path.empty()) return generator_from_json(read_json(path));
    if (!uniform) throw ParseError("give --uniform or --generator FILE");
    return canonical_uniform();
}

// ---- report -------------------------------------------------------------------

inline std::vector<EvolutionState> load_run(const fs::path& run)
{
    const auto last = last_persisted_generation(run);
    if (!last) throw ParseError("no persisted generations in " + run.string());
    std::vector<EvolutionState> out;
    for (std::size_t k = 0; k <= *last; ++k) out.push_back(load_generation(run, k));
    return out;
}

inline std::string curve_csv(const std::vector<EvolutionState>& states)
{
    std::string s = std::string(curve_csv_header) + "\n";
    for (const auto& st : states)
        s += std::to_string(st.generation) + "," + format_real(st.generator(st.champion_generator).fitness) + "," +
             format_real(st.heuristic(st.champion_heuristic).fitness) + "\n";
    return s;
}

inline std::string report_markdown(const std::vector<EvolutionState>& states)
{
    ReportTable curve{"Champion hardness and champion gap per generation", {"generation", "champion_hardness", "champion_gap"}, {}, {6, 6}};
    for (const auto& st : states)
        curve.rows.push_back({std::to_string(st.generation),
                              {st.generator(st.champion_generator).fitness, st.heuristic(st.champion_heuristic).fitness}});
    const EvolutionState& last = states.back();
    ReportTable gens{"Final generator population (hardness against the champion heuristic)", {"generator", "born", "hardness"}, {}, {0, 6}};
    ReportTable heurs{"Final heuristic population (mean gap over the top generators)", {"heuristic", "gap"}, {}, {6}};
    for (const auto& g : last.generators)
        gens.rows.push_back({g.id + " (" + generator_family(g.program.root) + ")", {static_cast<double>(g.born), g.fitness}});
    for (const auto& h : last.heuristics) heurs.rows.push_back({h.id, {h.fitness}});
    return render_table(curve, TableFormat::markdown) + "\n" + render_table(gens, TableFormat::markdown) + "\n" +
           render_table(heurs, TableFormat::markdown);
}

} // namespace cli

/// Entry point for the `ealg` tool. Returns 0 on success, 2 on usage
/// errors and 1 on runtime errors.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    namespace fs = std::filesystem;
    using namespace cli;
    CLI::App app{"Adversarial co-evolution of routing instance generators and heuristics"};
    app.require_subcommand(1);
    std::size_t workers = 0;
    app.add_option("--workers", workers, "evaluation threads (0 = hardware)");

    // gen
    auto* gen = app.add_subcommand("gen", "sample instances from a generator program");
    bool gen_uniform = false;
    std::string gen_program, gen_out = "instances", gen_kind = "tsp";
    std::size_t gen_n = 0, gen_count = 1;
    std::uint64_t gen_seed = 0;
    gen->add_flag("--uniform", gen_uniform, "use the canonical uniform generator");
    gen->add_option("--generator", gen_program, "generator program JSON");
    gen->add_option("--n", gen_n, "nodes per instance")->required();
    gen->add_option("--count", gen_count, "number of instances")->capture_default_str();
    gen->add_option("--seed", gen_seed, "base seed")->capture_default_str();
    gen->add_option("--kind", gen_kind, "tsp | op")->capture_default_str();
    gen->add_option("--out", gen_out, "output directory")->capture_default_str();

    // solve
    auto* solve = app.add_subcommand("solve", "run one solver on one instance");
    std::string solve_task_name, solve_instance, solve_heur, solve_out;
    std::uint64_t solve_seed = 0;
    BudgetFlags solve_budget;
    solve->add_option("--task", solve_task_name, "tsp_gls | tsp_aco | op_aco")->required();
    solve->add_option("--instance", solve_instance, "instance JSON")->required();
    solve->add_option("--heuristic", solve_heur, "heuristic program JSON (default: baseline)");
    solve->add_option("--seed", solve_seed, "solver seed")->capture_default_str();
    solve->add_option("--out", solve_out, "output file (default: stdout)");
    solve_budget.add(*solve);

    // gap
    auto* gap = app.add_subcommand("gap", "measure the relative gap of a heuristic on generated or stored instances");
    bool gap_uniform = false, gap_csv = false;
    std::string gap_task = "tsp_gls", gap_program, gap_heur, gap_out;
    std::vector<std::string> gap_instances;
    std::size_t gap_n = 0, gap_batch = 16;
    std::uint64_t gap_seed = 0;
    BudgetFlags gap_budget;
    PolicyFlags gap_policy;
    gap->add_option("--task", gap_task, "tsp_gls | tsp_aco | op_aco")->capture_default_str();
    gap->add_flag("--uniform", gap_uniform, "use the canonical uniform generator");
    gap->add_option("--generator", gap_program, "generator program JSON");
    gap->add_option("--instances", gap_instances, "instance files or directories instead of a generator");
    gap->add_option("--heuristic", gap_heur, "heuristic program JSON (default: baseline)");
    gap->add_option("--n", gap_n, "nodes per generated instance");
    gap->add_option("--batch", gap_batch, "generated instances")->capture_default_str();
    gap->add_option("--seed", gap_seed, "base seed")->capture_default_str();
    gap->add_flag("--csv", gap_csv, "print the CSV row instead of the JSON report");
    gap->add_option("--out", gap_out, "output file (default: stdout)");
    gap_budget.add(*gap);
    gap_policy.add(*gap);

    // evolve
    auto* evolve = app.add_subcommand("evolve", "run adversarial co-evolution into a run directory");
    std::string ev_config, ev_task = "tsp_gls", ev_synth = "offline", ev_out = "run", ev_endpoint, ev_model, ev_key_env;
    EvolutionConfig ev;
    std::uint64_t ev_seed = 0;
    bool ev_verbose = false;
    evolve->add_option("--config", ev_config, "EvolutionConfig JSON; flags override it");
    auto* o_task = evolve->add_option("--task", ev_task, "tsp_gls | tsp_aco | op_aco")->capture_default_str();
    auto* o_n = evolve->add_option("--n", ev.n, "problem size")->capture_default_str();
    auto* o_gens = evolve->add_option("--generations", ev.generations, "alternations")->capture_default_str();
    auto* o_batch = evolve->add_option("--batch", ev.batch, "instances per evaluation")->capture_default_str();
    auto* o_pg = evolve->add_option("--pop-gen", ev.pop_gen, "generator population")->capture_default_str();
    auto* o_ph = evolve->add_option("--pop-heur", ev.pop_heur, "heuristic population")->capture_default_str();
    auto* o_off = evolve->add_option("--offspring", ev.offspring_per_parent, "offspring per parent")->capture_default_str();
    auto* o_el = evolve->add_option("--elitism", ev.elitism, "parents always kept")->capture_default_str();
    auto* o_synth = evolve->add_option("--synthesizer", ev_synth, "offline | llm")->capture_default_str();
    auto* o_seed = evolve->add_option("--seed", ev_seed, "master seed")->capture_default_str();
    auto* o_ep = evolve->add_option("--endpoint", ev_endpoint, "chat-completions URL (llm mode)");
    auto* o_model = evolve->add_option("--model", ev_model, "model name (llm mode)");
    auto* o_key = evolve->add_option("--api-key-env", ev_key_env, "name of the environment variable holding the API key");
    evolve->add_option("--out", ev_out, "run directory")->capture_default_str();
    evolve->add_flag("--verbose", ev_verbose, "print progress to stderr");
    BudgetFlags ev_budget;
    ev_budget.add(*evolve);

    // tsplib
    auto* tsp = app.add_subcommand("tsplib", "solve a TSPLIB EUC_2D file with guided local search");
    std::vector<std::string> tsp_files;
    std::string tsp_heur, tsp_best, tsp_out;
    std::uint64_t tsp_seed = 0;
    bool tsp_real = false;
    BudgetFlags tsp_budget;
    tsp->add_option("--file", tsp_files, "TSPLIB .tsp files")->required();
    tsp->add_option("--heuristic", tsp_heur, "gls_guide program JSON (default: baseline)");
    tsp->add_option("--best-known", tsp_best, "sidecar CSV name,best_known");
    tsp->add_option("--seed", tsp_seed, "solver seed")->capture_default_str();
    tsp->add_flag("--real", tsp_real, "report real-valued instead of nint-rounded costs");
    tsp->add_option("--out", tsp_out, "output file (default: stdout)");
    tsp_budget.add(*tsp);

    // report
    auto* rep = app.add_subcommand("report", "regenerate curve.csv and markdown tables from a run directory");
    std::string rep_run, rep_out;
    rep->add_option("--run", rep_run, "run directory")->required();
    rep->add_option("--out", rep_out, "output directory (default: RUN/report)");

    // export-coords
    auto* exp = app.add_subcommand("export-coords", "flatten instances to CSV for external embedding tools");
    std::vector<std::string> exp_in;
    std::string exp_out;
    exp->add_option("--instances", exp_in, "instance files or directories")->required();
    exp->add_option("--out", exp_out, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (workers) set_worker_count(workers);
        if (gen->parsed()) {
            const GeneratorProgram g = pick_generator(gen_uniform, gen_program);
            const ProblemKind kind = problem_kind_from_string(gen_kind);
            fs::create_directories(gen_out);
            for (std::size_t i = 0; i < gen_count; ++i) {
                const Instance inst = generate(g, gen_n, offset_seed(SeedValue{gen_seed}, i), kind);
                char name[32];
                std::snprintf(name, sizeof name, "instance_%04zu.json", i);
                write_or_print(to_json(inst).dump() + "\n", (fs::path(gen_out) / name).string(), out);
            }
        } else if (solve->parsed()) {
            const Task task = task_from_string(solve_task_name);
            const Instance inst = instance_from_json(read_json(solve_instance));
            const SolveResult r = solve_task(task, inst, load_heuristic(solve_heur, task), solve_budget.budget(), SeedValue{solve_seed});
            write_or_print(to_json(r).dump(2) + "\n", solve_out, out);
        } else if (gap->parsed()) {
            const Task task = task_from_string(gap_task);
            const HeuristicProgram h = load_heuristic(gap_heur, task);
            EvalOptions opts;
            opts.budget = gap_budget.budget();
            if (!gap_heur.empty()) opts.heuristic_id = default_program_id(h);
            GapReport r;
            if (!gap_instances.empty()) {
                r = evaluate_instances(load_instances(gap_instances), h, task, gap_policy.policy(), SeedValue{gap_seed}, opts);
            } else {
                if (gap_n == 0) throw ParseError("--n is required with a generator");
                r = evaluate_hardness(pick_generator(gap_uniform, gap_program), h, gap_n, gap_batch, SeedValue{gap_seed}, task,
                                      gap_policy.policy(), opts);
            }
            write_or_print(gap_csv ? to_csv({r}) : to_json(r).dump(2) + "\n", gap_out, out);
        } else if (evolve->parsed()) {
            EvolutionConfig cfg;
            if (!ev_config.empty()) cfg = evolution_config_from_json(read_json(ev_config));
            if (ev_config.empty() || o_task->count()) cfg.task = task_from_string(ev_task);
            if (ev_config.empty() || o_n->count()) cfg.n = ev.n;
            if (ev_config.empty() || o_gens->count()) cfg.generations = ev.generations;
            if (ev_config.empty() || o_batch->count()) cfg.batch = ev.batch;
            if (ev_config.empty() || o_pg->count()) cfg.pop_gen = ev.pop_gen;
            if (ev_config.empty() || o_ph->count()) cfg.pop_heur = ev.pop_heur;
            if (ev_config.empty() || o_off->count()) cfg.offspring_per_parent = ev.offspring_per_parent;
            if (ev_config.empty() || o_el->count()) cfg.elitism = ev.elitism;
            if (ev_config.empty() || o_synth->count()) cfg.synthesizer = synthesizer_from_string(ev_synth);
            if (ev_config.empty() || o_seed->count()) cfg.master_seed = SeedValue{ev_seed};
            if (o_ep->count()) cfg.connector.endpoint = ev_endpoint;
            if (o_model->count()) cfg.connector.model = ev_model;
            if (o_key->count()) cfg.connector.api_key_env = ev_key_env;
            if (ev_config.empty()) {
                cfg.budget = ev_budget.budget();
            } else {
                const SolverBudget b = ev_budget.budget();
                if (evolve->get_option("--gls-iters")->count()) cfg.budget.gls.budget_ls_iters = b.gls.budget_ls_iters;
                if (evolve->get_option("--aco-iters")->count()) cfg.budget.aco.iterations = b.aco.iterations;
                if (evolve->get_option("--ants")->count()) cfg.budget.aco.n_ants = b.aco.n_ants;
            }
            validate(cfg);
            ProgressFn progress;
            if (ev_verbose) progress = [&err](std::size_t g, std::string_view what) { err << "[gen " << g << "] " << what << "\n"; };
            std::unique_ptr<Synthesizer> synth;
            if (cfg.synthesizer == SynthesizerKind::llm) {
                synth = std::make_unique<LlmSynthesizer>(cfg.connector, std::make_shared<HttpTransport>(cfg.connector));
            } else {
                synth = std::make_unique<OfflineSynthesizer>();
            }
            const RunArtifacts run = run_coevolution(cfg, ev_out, *synth, progress);
            out << "run directory: " << ev_out << "\n" << "champion generator " << run.state.champion_generator << " hardness "
                << format_real(run.state.generator(run.state.champion_generator).fitness) << "\n"
                << "champion heuristic " << run.state.champion_heuristic << " gap "
                << format_real(run.state.heuristic(run.state.champion_heuristic).fitness) << "\n";
        } else if (tsp->parsed()) {
            const HeuristicProgram h = load_heuristic(tsp_heur, Task::tsp_gls);
            std::map<std::string, double> best;
            if (!tsp_best.empty()) best = load_best_known(tsp_best);
            Json results = Json::array();
            for (const auto& file : tsp_files) {
                const TsplibFile f = parse_tsplib_file(file);
                const auto [inst, scale] = to_instance(f);
                GlsParams p = tsp_budget.budget().gls;
                p.seed = SeedValue{tsp_seed};
                const SolveResult r = solve_gls(inst, h, p);
                const double cost = original_tour_cost(f, r.tour().order, !tsp_real);
                Json j = {{"name", f.name}, {"n", inst.size()}, {"cost", cost}, {"rounding", tsp_real ? "real" : "nint"}};
                if (auto it = best.find(f.name); it != best.end()) {
                    j["best_known"] = it->second;
                    j["gap"] = cost / it->second - 1.0;
                }
                results.push_back(j);
            }
            write_or_print(results.dump(2) + "\n", tsp_out, out);
        } else if (rep->parsed()) {
            const auto states = load_run(rep_run);
            const fs::path dir = rep_out.empty() ? fs::path(rep_run) / "report" : fs::path(rep_out);
            fs::create_directories(dir);
            write_or_print(curve_csv(states), (dir / "curve.csv").string(), out);
            write_or_print(report_markdown(states), (dir / "report.md").string(), out);
            out << "wrote " << (dir / "curve.csv").string() << " and " << (dir / "report.md").string() << "\n";
        } else if (exp->parsed()) {
            std::string csv = "instance_id,node,x,y,prize\n";
            for (const auto& inst : load_instances(exp_in)) {
                for (std::size_t i = 0; i < inst.size(); ++i) {
                    csv += inst.id + "," + std::to_string(i) + "," + format_real(inst.coords[i].x) + "," + format_real(inst.coords[i].y) + "," +
                           (inst.prizes ? format_real((*inst.prizes)[i]) : std::string()) + "\n";
                }
            }
            write_or_print(csv, exp_out, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace ealg
