#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>

#include "ealg/llm.hpp"

using namespace ealg;
namespace fs = std::filesystem;

namespace {

/// Replays canned replies and records every request body.
class StubTransport : public Transport {
public:
    std::deque<std::string> replies;
    std::vector<std::string> requests;
    bool fail_network = false;

    std::string post(const std::string& body) override
    {
        requests.push_back(body);
        if (fail_network) throw TransportError("connection refused");
        if (replies.empty()) throw TransportError("no canned reply left");
        std::string r = replies.front();
        if (replies.size() > 1) replies.pop_front();
        return r;
    }
};

std::string chat_reply(const std::string& content)
{
    return Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

ReflectionNote sample_note(int i)
{
    ReflectionNote n;
    n.generation = 1;
    n.side = Side::heuristic;
    n.subject = "H00" + std::to_string(10 + i);
    n.parent = "H0001";
    n.edit = "operator_replacement";
    n.parent_fitness = 0.04;
    n.child_fitness = 0.03 - 0.001 * i;
    n.fitness_delta = n.child_fitness - n.parent_fitness;
    n.summary.improved_families = {"ring"};
    n.summary.degraded_families = i % 2 ? std::vector<std::string>{"grid"} : std::vector<std::string>{};
    return n;
}

SynthesisRequest heuristic_request(std::size_t notes)
{
    SynthesisRequest r;
    r.side = Side::heuristic;
    r.task = Task::tsp_gls;
    r.n = 100;
    r.parent_id = "H0001";
    r.parent_fitness = 0.04;
    r.heuristic = baseline_heuristic(HeuristicTarget::gls_guide);
    for (std::size_t i = 0; i < notes; ++i) r.recent_reflections.push_back(sample_note(static_cast<int>(i)));
    return r;
}

SynthesisRequest generator_request()
{
    SynthesisRequest r;
    r.side = Side::generator;
    r.task = Task::op_aco;
    r.n = 50;
    r.parent_id = "G0001";
    r.parent_fitness = 0.012;
    r.generator = GeneratorProgram{mix({1.0, 2.0}, {uniform_square(), ring(0.3, 0.05)}), 1, PrizeRule{}, BudgetRule{}};
    return r;
}

void check_golden(const std::string& name, const std::string& text)
{
    const fs::path path = fs::path(EALG_PROMPTS_DIR) / name;
    if (std::getenv("EALG_UPDATE_GOLDEN")) {
        std::ofstream(path, std::ios::binary) << text;
        return;
    }
    std::ifstream in(path, std::ios::binary);
    ASSERT_TRUE(in) << "missing golden file " << path;
    const std::string golden{std::istreambuf_iterator<char>(in), {}};
    EXPECT_EQ(text, golden) << "prompt drifted from " << path;
}

const std::string valid_generator = R"({"version": 1, "root": {"node": "ring", "radius": 0.25, "jitter": 0.02}})";

} // namespace

TEST(Prompt, GoldenGeneratorNoFeedback)
{
    const RenderedPrompt p = render_prompt(make_template(generator_request(), ConnectorConfig{}));
    EXPECT_FALSE(p.truncated);
    EXPECT_NE(p.text.find(no_prior_feedback), std::string::npos);
    check_golden("generator_op_aco.txt", p.text);
}

TEST(Prompt, GoldenHeuristicThreeNotesInOrder)
{
    const RenderedPrompt p = render_prompt(make_template(heuristic_request(3), ConnectorConfig{}));
    EXPECT_EQ(p.reflections_kept, 3u);
    const auto a = p.text.find("H0010"), b = p.text.find("H0011"), c = p.text.find("H0012");
    ASSERT_NE(c, std::string::npos);
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
    EXPECT_EQ(p.text.find(no_prior_feedback), std::string::npos);
    check_golden("heuristic_tsp_gls.txt", p.text);
}

TEST(Prompt, OversizedFeedbackDropsOldestFirst)
{
    PromptTemplate t = make_template(heuristic_request(0), ConnectorConfig{});
    const std::size_t base = estimate_tokens(render_prompt(t).text);
    for (int i = 0; i < 6; ++i) t.reflection_context.push_back("note-" + std::to_string(i) + " " + std::string(400, 'x'));
    t.token_budget = base + 2 * 110 + 20;  // room for two notes of ~103 tokens plus the omission line
    const RenderedPrompt p = render_prompt(t);
    EXPECT_TRUE(p.truncated);
    EXPECT_EQ(p.reflections_kept, 2u);
    EXPECT_EQ(p.text.find("note-3"), std::string::npos);
    EXPECT_NE(p.text.find("note-4"), std::string::npos);
    EXPECT_NE(p.text.find("note-5"), std::string::npos);
    EXPECT_LE(estimate_tokens(p.text), t.token_budget);

    t.token_budget = base / 2;
    EXPECT_THROW(render_prompt(t), SizeLimitError);
    t.parent_program.clear();
    EXPECT_THROW(render_prompt(t), ParseError);
}

TEST(Extract, FirstFencedBlockOnly)
{
    EXPECT_EQ(extract_fenced_json("Sure.\n```json\n{\"a\": 1}\n```\nand ```json\n{\"b\": 2}\n```"), std::optional<std::string>("{\"a\": 1}"));
    EXPECT_EQ(extract_fenced_json("```\n[1]\n```"), std::optional<std::string>("[1]"));
    EXPECT_FALSE(extract_fenced_json("no block here").has_value());
    EXPECT_FALSE(extract_fenced_json("```python\nprint(1)\n```").has_value());
    EXPECT_FALSE(extract_fenced_json("```json\n{ unterminated").has_value());
}

TEST(Synthesize, CannedValidProgramInOneRequest)
{
    StubTransport stub;
    stub.replies = {chat_reply("```json\n" + valid_generator + "\n```")};
    ConnectorConfig cfg;
    const auto o = synthesize_program(make_template(generator_request(), cfg), Side::generator, cfg, stub);
    ASSERT_TRUE(o.generator.has_value());
    EXPECT_EQ(*o.generator, generator_from_json(Json::parse(valid_generator)));
    EXPECT_EQ(stub.requests.size(), 1u);
    EXPECT_EQ(o.attempts.size(), 1u);
    const Json req = Json::parse(stub.requests.front());
    EXPECT_EQ(req.at("temperature").get<double>(), 0.8);
    EXPECT_EQ(req.at("messages").size(), 2u);
    EXPECT_EQ(req.at("messages")[0].at("role"), "system");
}

TEST(Synthesize, ProseBeforeBlockIgnored)
{
    StubTransport stub;
    stub.replies = {chat_reply("Here is a harder ring {\"version\": 2}.\n```json\n" + valid_generator + "\n```\nThanks.")};
    ConnectorConfig cfg;
    const auto o = synthesize_program(make_template(generator_request(), cfg), Side::generator, cfg, stub);
    ASSERT_TRUE(o.generator.has_value());
    EXPECT_EQ(o.generator->root.kind, GenKind::ring);
}

TEST(Synthesize, InvalidRepliesExhaustRetries)
{
    StubTransport stub;
    stub.replies = {chat_reply("```json\n{not json\n```")};
    ConnectorConfig cfg;
    cfg.max_retries = 3;
    const auto o = synthesize_program(make_template(generator_request(), cfg), Side::generator, cfg, stub);
    EXPECT_TRUE(o.fallback());
    EXPECT_EQ(stub.requests.size(), 4u);
    ASSERT_EQ(o.attempts.size(), 4u);
    for (const auto& a : o.attempts) EXPECT_FALSE(a.error.empty());
    // each retry carries the rejection reason
    const Json last = Json::parse(stub.requests.back());
    EXPECT_NE(last.at("messages").back().at("content").get<std::string>().find("rejected"), std::string::npos);
    EXPECT_EQ(last.at("messages").size(), 2u + 2u * 3u);
}

TEST(Synthesize, ValidationErrorsAndNetworkFailuresRetry)
{
    StubTransport stub;
    stub.replies = {chat_reply("```json\n{\"version\": 1, \"root\": {\"node\": \"ring\", \"radius\": 9, \"jitter\": 0}}\n```")};
    ConnectorConfig cfg;
    cfg.max_retries = 1;
    auto o = synthesize_program(make_template(generator_request(), cfg), Side::generator, cfg, stub);
    EXPECT_TRUE(o.fallback());
    EXPECT_NE(o.attempts.front().error.find("radius"), std::string::npos);

    StubTransport down;
    down.fail_network = true;
    cfg.max_retries = 0;
    o = synthesize_program(make_template(generator_request(), cfg), Side::generator, cfg, down);
    EXPECT_TRUE(o.fallback());
    EXPECT_EQ(down.requests.size(), 1u);

    // wrong heuristic target is rejected
    StubTransport wrong;
    wrong.replies = {chat_reply("```json\n" + to_json(baseline_heuristic(HeuristicTarget::aco_eta_tsp)).dump() + "\n```")};
    o = synthesize_program(make_template(heuristic_request(0), cfg), Side::heuristic, cfg, wrong, HeuristicTarget::gls_guide);
    EXPECT_TRUE(o.fallback());
}

TEST(LlmSynthesizer, ReflectionTextPassThroughAndFallback)
{
    auto stub = std::make_shared<StubTransport>();
    stub->replies = {chat_reply("The ring radius shrank; try tighter clusters.")};
    LlmSynthesizer synth(ConnectorConfig{}, stub);
    const GapReport base = [] {
        GapReport r;
        r.task = Task::tsp_gls;
        r.n = 20;
        r.batch = 1;
        r.base_seed = 3;
        r.generator_id = "G0001";
        r.heuristic_id = "H0001";
        r.per_instance = {{3, 1.1, 1.0}};
        r.gap = 0.1;
        return r;
    }();
    const ReflectionNote offline = reflect(base, base, Side::generator);
    const ReflectionNote with_text = reflect(base, base, Side::generator, "all",
                                             [&](const ReflectionNote& n) { return synth.reflection_text(n); });
    ASSERT_TRUE(with_text.text.has_value());
    EXPECT_EQ(*with_text.text, "The ring radius shrank; try tighter clusters.");
    ReflectionNote stripped = with_text;
    stripped.text.reset();
    EXPECT_EQ(stripped, offline);

    // a proposal whose replies never validate yields nothing, so the engine falls back
    stub->replies = {chat_reply("no program today")};
    EXPECT_FALSE(synth.propose(generator_request()).has_value());
    stub->replies = {chat_reply("```json\n" + valid_generator + "\n```")};
    const auto p = synth.propose(generator_request());
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(p->edit, "llm");
}
