#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ealg/evolution.hpp"

namespace ealg {

// ---- prompt templates ------------------------------------------------------

struct PromptTemplate {
    std::string role_preamble;
    std::string task_description;
    std::string dsl_grammar_excerpt;
    std::string parent_program;                 // serialized program JSON
    std::vector<std::string> reflection_context;  // oldest first
    std::string output_contract;
    std::size_t token_budget = 6000;
};

struct RenderedPrompt {
    std::string text;
    bool truncated = false;
    std::size_t reflections_kept = 0;
};

inline constexpr const char* no_prior_feedback = "No prior feedback: this is the first proposal in its lineage.";

/// Rough token count: one token per four bytes, rounded up. Deliberately
/// model-agnostic; budgets should leave headroom.
inline std::size_t estimate_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

namespace detail {

/// Compact number for prompt text; exact values live in the run files.
inline std::string prompt_real(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string render_sections(const PromptTemplate& t, std::size_t first_kept, bool truncated)
{
    std::string out;
    out += "# Role\n" + t.role_preamble + "\n\n";
    out += "# Task\n" + t.task_description + "\n\n";
    out += "# Grammar\n" + t.dsl_grammar_excerpt + "\n\n";
    out += "# Parent program\n```json\n" + t.parent_program + "\n```\n\n";
    out += "# Prior feedback\n";
    if (first_kept >= t.reflection_context.size()) {
        out += std::string(no_prior_feedback) + "\n";
    } else {
        for (std::size_t i = first_kept; i < t.reflection_context.size(); ++i)
            out += "[" + std::to_string(i - first_kept + 1) + "] " + t.reflection_context[i] + "\n";
    }
    if (truncated) out += "(" + std::to_string(first_kept) + " older notes omitted to fit the token budget)\n";
    out += "\n# Output contract\n" + t.output_contract + "\n";
    return out;
}

} // namespace detail

/// Deterministic prompt text. When the budget is exceeded the oldest
/// reflections are dropped first; if the prompt still does not fit without
/// any reflections, SizeLimitError.
inline RenderedPrompt render_prompt(const PromptTemplate& t)
{
    for (const auto* field : {&t.role_preamble, &t.task_description, &t.dsl_grammar_excerpt, &t.parent_program, &t.output_contract})
        if (field->empty()) throw ParseError("prompt template has an empty slot");
    const std::size_t count = t.reflection_context.size();
    for (std::size_t first = 0; first <= count; ++first) {
        RenderedPrompt r;
        r.truncated = first > 0;
        r.text = detail::render_sections(t, first, r.truncated);
        r.reflections_kept = count - first;
        if (estimate_tokens(r.text) <= t.token_budget) return r;
    }
    throw SizeLimitError("prompt exceeds the token budget of " + std::to_string(t.token_budget) + " even without feedback");
}

inline std::string generator_grammar_excerpt()
{
    std::string out = "A generator is a JSON object {\"version\": 1, \"root\": NODE} and, for orienteering tasks, optional\n"
                      "\"prize_rule\": {\"rule\": uniform|distance_from_depot|cluster_bonus, \"scale\": 0.1..10} and\n"
                      "\"budget_rule\": {\"factor\": 0.5..4}. Points are sampled in the unit square. NODE is one of:\n";
    for (int i = 0; i <= static_cast<int>(GenKind::perturb); ++i) {
        const auto k = static_cast<GenKind>(i);
        out += "- {\"node\": \"" + std::string(to_string(k)) + "\"";
        for (const auto& s : param_specs(k)) {
            out += ", \"" + std::string(s.name) + "\": " + (s.integer ? "int " : "") + detail::prompt_real(s.lo) + ".." + detail::prompt_real(s.hi);
        }
        if (k == GenKind::mix) out += ", \"weights\": [w1..wk], \"children\": [NODE x 2..5]";
        if (k == GenKind::transform || k == GenKind::perturb) out += ", \"child\": NODE";
        out += "}\n";
    }
    out += "Limits: depth <= " + std::to_string(gen_limits::max_depth) + ", at most " + std::to_string(gen_limits::max_nodes) +
           " nodes; transform needs |a*d - b*c| >= " + detail::prompt_real(gen_limits::min_abs_det) + ".";
    return out;
}

inline std::string heuristic_grammar_excerpt(HeuristicTarget target)
{
    std::string out = "A heuristic is a JSON object {\"target\": \"" + std::string(to_string(target)) +
                      "\", \"root\": EXPR}. Every EXPR evaluates to an n x n matrix.\n"
                      "Leaves: {\"node\": \"dist\"} (pairwise distances), {\"node\": \"constant\", \"value\": c} with |c| <= " +
                      detail::prompt_real(heur_limits::const_bound);
    if (target == HeuristicTarget::aco_eta_op) out += ", {\"node\": \"prize_outer\"} (prize of the destination node in each column)";
    out += ".\nUnary, {\"node\": OP, \"args\": [EXPR]}: row_mean, row_min, row_max, rank_row, neg, abs, sqrt, exp_clamped, log_safe,\n"
           "normalize01, symmetrize.\n"
           "Binary, {\"node\": OP, \"args\": [EXPR, EXPR]}: add, sub, mul, safe_div, min, max.\n"
           "Limits: depth <= " +
           std::to_string(heur_limits::max_depth) + ", at most " + std::to_string(heur_limits::max_nodes) + " nodes.\n";
    out += target == HeuristicTarget::gls_guide
               ? "The matrix ranks edges by badness: guided local search penalizes the highest-scoring edges of each local optimum."
               : "The matrix is the ant visibility: larger entries make an edge more attractive.";
    return out;
}

inline std::string summarize_reflection(const ReflectionNote& n)
{
    auto list = [](const std::vector<std::string>& v) {
        if (v.empty()) return std::string("none");
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
        return s;
    };
    std::string out = std::string(to_string(n.side)) + " " + n.subject + " from " + n.parent + " via " + n.edit + ": fitness " +
                      detail::prompt_real(n.parent_fitness) + " -> " + detail::prompt_real(n.child_fitness) + " (delta " + detail::prompt_real(n.fitness_delta) +
                      "); improved families: " + list(n.summary.improved_families) +
                      "; degraded families: " + list(n.summary.degraded_families) + ".";
    if (n.text) out += " Comment: " + *n.text;
    return out;
}

inline constexpr const char* role_preamble_text =
    "You design small programs in a closed JSON grammar for an adversarial benchmark of routing heuristics. "
    "You never write executable code; you only emit program trees in the grammar given below.";

inline constexpr const char* output_contract_text =
    "Reply with exactly one fenced code block tagged json that holds the complete program. "
    "Anything outside the block is ignored. The program must differ from the parent and respect every limit above.";

/// Prompt for one child of `req`'s parent.
inline PromptTemplate make_template(const SynthesisRequest& req, const ConnectorConfig& cfg)
{
    PromptTemplate t;
    t.role_preamble = role_preamble_text;
    t.output_contract = output_contract_text;
    t.token_budget = cfg.token_budget;
    const std::string task(to_string(req.task));
    if (req.side == Side::generator) {
        t.task_description = "Write an instance generator for task " + task + " at n = " + std::to_string(req.n) +
                             ". Its instances should make the current champion heuristic perform as far from the reference "
                             "solution as possible. Fitness is the relative gap mean(heuristic)/mean(reference) - 1; higher is better. "
                             "The parent " + req.parent_id + " has fitness " + detail::prompt_real(req.parent_fitness) + ".";
        t.dsl_grammar_excerpt = generator_grammar_excerpt();
        t.parent_program = to_json(*req.generator).dump(2);
    } else {
        t.task_description = "Write a guidance heuristic for task " + task + " at n = " + std::to_string(req.n) +
                             ". It is scored by its mean relative gap over the hardest current generators; lower is better. "
                             "The parent " + req.parent_id + " has fitness " + detail::prompt_real(req.parent_fitness) + ".";
        t.dsl_grammar_excerpt = heuristic_grammar_excerpt(task_target(req.task));
        t.parent_program = to_json(*req.heuristic).dump(2);
    }
    for (const auto& n : req.recent_reflections) t.reflection_context.push_back(summarize_reflection(n));
    return t;
}

// ---- wire protocol ---------------------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
};

inline Json chat_request_body(const ConnectorConfig& cfg, const std::vector<ChatMessage>& messages)
{
    Json m = Json::array();
    for (const auto& x : messages) m.push_back({{"role", x.role}, {"content", x.content}});
    return {{"model", cfg.model}, {"temperature", cfg.temperature}, {"messages", m}};
}

inline std::string chat_reply_text(const std::string& body)
{
    try {
        return Json::parse(body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
        throw TransportError(std::string("unreadable chat reply: ") + e.what());
    }
}

/// Sends one request body and returns the response body. Implementations
/// throw TransportError on any failure.
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string post(const std::string& body) = 0;
};

/// Contents of the first fenced code block (``` or ```json), if any.
inline std::optional<std::string> extract_fenced_json(const std::string& text)
{
    std::size_t open = text.find("```");
    if (open == std::string::npos) return std::nullopt;
    std::size_t body = text.find('\n', open);
    if (body == std::string::npos) return std::nullopt;
    const std::string tag = text.substr(open + 3, body - open - 3);
    if (tag.find_first_not_of(" \tjsonJSON\r") != std::string::npos) return std::nullopt;
    const std::size_t close = text.find("```", body + 1);
    if (close == std::string::npos) return std::nullopt;
    std::string block = text.substr(body + 1, close - body - 1);
    while (!block.empty() && (block.back() == '\n' || block.back() == '\r')) block.pop_back();
    return block;
}

struct SynthesisAttempt {
    std::size_t index = 0;
    std::string error;  // empty when the attempt produced a valid program
};

struct SynthesisOutcome {
    std::optional<GeneratorProgram> generator;
    std::optional<HeuristicProgram> heuristic;
    std::vector<SynthesisAttempt> attempts;
    bool fallback() const noexcept { return !generator && !heuristic; }
};

/// Asks the model for one program, re-prompting with the rejection reason up
/// to `max_retries` times. Never throws for model or transport failures; an
/// exhausted outcome has fallback() set.
inline SynthesisOutcome synthesize_program(const PromptTemplate& t, Side kind, const ConnectorConfig& cfg, Transport& transport,
                                           std::optional<HeuristicTarget> target = std::nullopt)
{
    SynthesisOutcome out;
    const RenderedPrompt prompt = render_prompt(t);
    std::vector<ChatMessage> messages{{"system", t.role_preamble}, {"user", prompt.text}};
    const std::size_t total = 1 + static_cast<std::size_t>(std::max(0, cfg.max_retries));
    for (std::size_t a = 0; a < total; ++a) {
        SynthesisAttempt attempt{a + 1, {}};
        std::string reply;
        try {
            reply = chat_reply_text(transport.post(chat_request_body(cfg, messages).dump()));
            const auto block = extract_fenced_json(reply);
            if (!block) throw ParseError("no fenced json block in the reply");
            const Json j = Json::parse(*block);
            if (kind == Side::generator) {
                out.generator = generator_from_json(j);
            } else {
                HeuristicProgram h = heuristic_from_json(j);
                if (target && h.target != *target)
                    throw TypeError("program target " + std::string(to_string(h.target)) + " but " + std::string(to_string(*target)) +
                                    " was requested");
                out.heuristic = std::move(h);
            }
            out.attempts.push_back(attempt);
            return out;
        } catch (const std::exception& e) {
            attempt.error = e.what();
        }
        out.attempts.push_back(attempt);
        if (!reply.empty()) messages.push_back({"assistant", reply});
        messages.push_back({"user", "Your previous reply was rejected: " + attempt.error +
                                        "\nReply again with exactly one fenced json block holding a valid program."});
    }
    return out;
}

/// Synthesizer backed by a chat endpoint. Exhausted requests return nothing
/// so the engine substitutes an offline mutation.
class LlmSynthesizer : public Synthesizer {
public:
    LlmSynthesizer(ConnectorConfig cfg, std::shared_ptr<Transport> transport) : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

    std::optional<Proposal> propose(const SynthesisRequest& req) override
    {
        const PromptTemplate t = make_template(req, cfg_);
        std::optional<HeuristicTarget> target;
        if (req.side == Side::heuristic) target = req.heuristic->target;
        SynthesisOutcome o = synthesize_program(t, req.side, cfg_, *transport_, target);
        attempts_ += o.attempts.size();
        if (o.fallback()) return std::nullopt;
        Proposal p;
        p.generator = std::move(o.generator);
        p.heuristic = std::move(o.heuristic);
        p.edit = "llm";
        return p;
    }

    std::optional<std::string> reflection_text(const ReflectionNote& note) override
    {
        const std::vector<ChatMessage> messages{
            {"system", role_preamble_text},
            {"user", "In at most two sentences, explain what this edit changed and what to try next:\n" + summarize_reflection(note)}};
        try {
            std::string text = chat_reply_text(transport_->post(chat_request_body(cfg_, messages).dump()));
            ++attempts_;
            return text;
        } catch (const std::exception&) {
            ++attempts_;
            return std::nullopt;
        }
    }

    std::size_t attempts() const noexcept { return attempts_; }

private:
    ConnectorConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::size_t attempts_ = 0;
};

} // namespace ealg
