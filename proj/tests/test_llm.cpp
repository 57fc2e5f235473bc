#include <gtest/gtest.h>

#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "coevolve/grammar.hpp"
#include "coevolve/human_info.hpp"
#include "coevolve/instance.hpp"
#include "coevolve/llm_migrator.hpp"
#include "coevolve/metrics.hpp"
#include "test_util.hpp"

using namespace coevolve;
using coevolve::test::read_fixture;
using coevolve::test::TempDir;
using nlohmann::json;

namespace {

// Renders the LaTeX source of the prompt box: escaped underscores, forced
// line breaks and TeX quotes.
std::string decode_tex(const std::string& tex) {
    std::istringstream in(tex);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (line.size() >= 2 && line.compare(line.size() - 2, 2, "\\\\") == 0) line.resize(line.size() - 2);
        while (!line.empty() && line.back() == ' ') line.pop_back();
        lines.push_back(line);
    }
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) out += (i ? "\n" : "") + lines[i];
    auto replace_all = [&](const std::string& from, const std::string& to) {
        for (auto at = out.find(from); at != std::string::npos; at = out.find(from, at + to.size()))
            out.replace(at, from.size(), to);
    };
    replace_all("\\_", "_");
    replace_all("``", "\"");
    replace_all("''", "\"");
    return out;
}

class StubProvider : public Provider {
public:
    std::vector<Completion> replies;
    std::size_t fail_at = SIZE_MAX;
    std::vector<std::vector<ChatMessage>> requests;
    std::size_t budget_seen = 0;

    std::string id() const override { return "stub-model"; }
    Completion complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override {
        requests.push_back(messages);
        budget_seen = options.max_output_tokens;
        const std::size_t k = requests.size() - 1;
        if (k == fail_at) throw ProviderError("injected failure");
        return replies.empty() ? Completion{"ok\n", 1.0, false} : replies[k % replies.size()];
    }
};

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

const std::string kG1 = "grammar a.B\nM: 'x' name=ID;\n";
const std::string kG2 = "grammar a.B\nM: 'y' name=ID;\n";
const std::string kI1 = "// note\nx foo\n";

}  // namespace

TEST(LlmMigrator, DefaultFinalPromptIsByteExact) {
    EXPECT_EQ(default_final_prompt(), decode_tex(read_fixture("prompts/final_prompt.tex")));
    EXPECT_EQ(PromptConfig{}.final_prompt, default_final_prompt());
    EXPECT_EQ(PromptConfig{}.max_output_tokens, 64000u);
}

TEST(LlmMigrator, SessionHasFiveMessagesInOrder) {
    StubProvider p;
    p.replies = {{"y foo\n", 2.5, false}};
    const MigrationSession s = run_migration(kG1, kG2, kI1, PromptConfig{}, p);
    ASSERT_EQ(s.messages.size(), 5u);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(s.messages[i].role, "user");
    EXPECT_EQ(s.messages[4].role, "assistant");
    EXPECT_NE(s.messages[0].content.find(kG1), std::string::npos);
    EXPECT_NE(s.messages[0].content.find("Grammar 1"), std::string::npos);
    EXPECT_NE(s.messages[1].content.find(kG2), std::string::npos);
    EXPECT_NE(s.messages[2].content.find(kI1), std::string::npos);
    EXPECT_EQ(s.messages[3].content, default_final_prompt());
    EXPECT_EQ(s.output, "y foo\n");
    EXPECT_EQ(s.wall_clock_s, 2.5);
    EXPECT_EQ(s.provider_id, "stub-model");
    EXPECT_EQ(p.budget_seen, 64000u);
    // All four user messages go out in a single request.
    ASSERT_EQ(p.requests.size(), 1u);
    EXPECT_EQ(p.requests[0], build_request(kG1, kG2, kI1, PromptConfig{}));
}

TEST(LlmMigrator, PromptOverrides) {
    const PromptConfig c = prompt_config_from_json(
        json{{"final_prompt", "go"}, {"grammar1_hint", "G1:"}, {"max_output_tokens", 100}});
    EXPECT_EQ(c.final_prompt, "go");
    EXPECT_EQ(c.max_output_tokens, 100u);
    const auto req = build_request(kG1, kG2, kI1, c);
    EXPECT_EQ(req[0].content, "G1:\n\n" + kG1);
    EXPECT_EQ(req[3].content, "go");
    EXPECT_EQ(render_hint("<{content}>", "abc"), "<abc>");
    EXPECT_THROW(prompt_config_from_json(json{{"max_output_tokens", 0}}), Error);
}

TEST(LlmMigrator, FenceStripping) {
    EXPECT_EQ(strip_code_fences("```\nx foo\n```"), "x foo\n");
    EXPECT_EQ(strip_code_fences("\n```dmodel\n  a\n\n\tb\n```\n\n"), "  a\n\n\tb\n");
    EXPECT_EQ(strip_code_fences("x foo\n"), "x foo\n");
    EXPECT_EQ(strip_code_fences("Here it is:\n```\nx\n```\n"), "Here it is:\n```\nx\n```\n");
    EXPECT_EQ(strip_code_fences("```\nx\n```\ntrailing prose\n"), "```\nx\n```\ntrailing prose\n");
    EXPECT_EQ(strip_code_fences("```\nx\n"), "```\nx\n");
}

TEST(LlmMigrator, EmptyResponseKeepsTheSession) {
    StubProvider p;
    p.replies = {{"", 3.0, false}};
    try {
        run_migration(kG1, kG2, kI1, PromptConfig{}, p);
        FAIL() << "expected EmptyResponse";
    } catch (const EmptyResponse& e) {
        EXPECT_EQ(e.session().output, "");
        EXPECT_EQ(e.session().messages.size(), 5u);
        EXPECT_EQ(e.session().wall_clock_s, 3.0);
    }

    // Scored, the empty output loses every comment and evolves nothing correctly.
    const GrammarAst g1 = parse_grammar(read_fixture("domainmodel/grammar1.xtext"));
    const GrammarAst g2 = parse_grammar(read_fixture("domainmodel/grammar2.xtext"));
    const std::string source = read_fixture("domainmodel/instance1.dmodel");
    const LosslessInstance inst1 = lex_for_evaluation(source, g1, g2);
    const HumanInfoProfile profile = extract_human_info(lex_instance(source, g1), &g1);
    const RunMetrics m = evaluate_run(inst1, profile, "", g2, compute_line_req(inst1, g2), 3.0);
    EXPECT_TRUE(m.failed_generation);
    EXPECT_EQ(m.correctness.precision, 0.0);
    EXPECT_EQ(m.preservation.cmt_ret, 0.0);
    EXPECT_EQ(m.response_time_s, 3.0);
}

TEST(LlmMigrator, TruncatedResponseIsReported) {
    StubProvider p;
    p.replies = {{"x fo", 1.0, true}};
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, p), TokenBudgetExceeded);
}

TEST(LlmMigrator, RepetitionsSurviveAFailingRun) {
    StubProvider p;
    p.fail_at = 3;
    std::vector<std::size_t> seen;
    const auto results = run_repetitions(kG1, kG2, kI1, PromptConfig{}, p, 10,
                                         [&](std::size_t k, const RepetitionResult&) { seen.push_back(k); });
    ASSERT_EQ(results.size(), 10u);
    std::size_t ok = 0;
    for (const auto& r : results) ok += r.session.has_value() && r.error_kind.empty();
    EXPECT_EQ(ok, 9u);
    EXPECT_EQ(results[3].error_kind, "ProviderError");
    EXPECT_FALSE(results[3].session);
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    // No state is shared between repetitions.
    for (const auto& req : p.requests) EXPECT_EQ(req, p.requests.front());

    EXPECT_EQ(run_repetitions(kG1, kG2, kI1, PromptConfig{}, p, 1).size(), 1u);
    EXPECT_THROW(run_repetitions(kG1, kG2, kI1, PromptConfig{}, p, 0), Error);
}

TEST(LlmMigrator, TranscriptKeyIsSha256OfCanonicalJson) {
    // sha256 of {"messages":[{"content":"hi","role":"user"}],"provider_id":"p"}
    EXPECT_EQ(transcript_key("p", {{"user", "hi"}}),
              "24616e4707cc1fc1b9577f2cc5ba7d3405b17bf30701606e1455bdc08b2818ee");
    EXPECT_NE(transcript_key("q", {{"user", "hi"}}), transcript_key("p", {{"user", "hi"}}));
}

TEST(LlmMigrator, RecordThenReplayInOrder) {
    TempDir dir;
    const std::string path = (dir.path / "transcripts.jsonl").string();
    auto stub = std::make_shared<StubProvider>();
    for (int k = 0; k < 10; ++k) stub->replies.push_back({"y r" + std::to_string(k) + "\n", 10.0 + k, false});
    {
        RecordingProvider rec(stub, std::make_shared<TranscriptStore>(path));
        run_repetitions(kG1, kG2, kI1, PromptConfig{}, rec, 10);
    }
    auto store = std::make_shared<const TranscriptStore>(path);
    EXPECT_EQ(store->size(), 10u);

    auto replay_once = [&] {
        ReplayProvider replay(store, "stub-model");
        return run_repetitions(kG1, kG2, kI1, PromptConfig{}, replay, 10);
    };
    const auto a = replay_once();
    const auto b = replay_once();
    for (int k = 0; k < 10; ++k) {
        ASSERT_TRUE(a[k].session);
        EXPECT_EQ(a[k].session->output, "y r" + std::to_string(k) + "\n");
        EXPECT_EQ(a[k].session->wall_clock_s, 10.0 + k);
        EXPECT_EQ(session_to_json(*a[k].session).dump(), session_to_json(*b[k].session).dump());
    }

    // An eleventh request has no recording.
    ReplayProvider replay(store, "stub-model");
    const auto more = run_repetitions(kG1, kG2, kI1, PromptConfig{}, replay, 11);
    EXPECT_EQ(more[10].error_kind, "ReplayMiss");

    ReplayProvider other(store, "stub-model");
    EXPECT_THROW(run_migration(kG1, kG2, "x changed\n", PromptConfig{}, other), ReplayMiss);
    ReplayProvider wrong_id(store, "another-model");
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, wrong_id), ReplayMiss);
}

TEST(LlmMigrator, HttpOpenAiStyle) {
    LocalServer srv;
    json seen;
    std::string auth;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "```\ny foo\n```"}}},
                                           {"finish_reason", "stop"}}}}}
                            .dump(),
                        "application/json");
    });
    srv.start();
    setenv("COEVOLVE_TEST_KEY", "secret", 1);
    HttpChatProvider p(http_provider_config_from_json(
        json{{"endpoint", srv.endpoint()}, {"model", "m1"}, {"api_key_env", "COEVOLVE_TEST_KEY"}}));
    const MigrationSession s = run_migration(kG1, kG2, kI1, PromptConfig{}, p);
    EXPECT_EQ(s.output, "y foo\n");
    EXPECT_EQ(s.provider_id, "m1");
    EXPECT_GE(s.wall_clock_s, 0.05);
    EXPECT_EQ(auth, "Bearer secret");
    EXPECT_EQ(seen["model"], "m1");
    EXPECT_EQ(seen["max_completion_tokens"], 64000);
    ASSERT_EQ(seen["messages"].size(), 4u);
    EXPECT_EQ(seen["messages"][3]["content"], default_final_prompt());
}

TEST(LlmMigrator, HttpAnthropicStyle) {
    LocalServer srv;
    json seen;
    std::string key;
    std::string stop = "end_turn";
    srv.server.Post("/v1/messages", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        key = req.get_header_value("x-api-key");
        res.set_content(json{{"content", {{{"type", "text"}, {"text", "y foo\n"}}}}, {"stop_reason", stop}}.dump(),
                        "application/json");
    });
    srv.start();
    setenv("COEVOLVE_TEST_KEY", "k2", 1);
    HttpChatProvider p(http_provider_config_from_json(json{{"api_style", "anthropic"},
                                                           {"endpoint", srv.endpoint()},
                                                           {"model", "m2"},
                                                           {"api_key_env", "COEVOLVE_TEST_KEY"}}));
    EXPECT_EQ(run_migration(kG1, kG2, kI1, PromptConfig{}, p).output, "y foo\n");
    EXPECT_EQ(key, "k2");
    EXPECT_EQ(seen["max_tokens"], 64000);
    stop = "max_tokens";
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, p), TokenBudgetExceeded);
}

TEST(LlmMigrator, HttpFailures) {
    LocalServer srv;
    srv.server.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    srv.server.Post("/null", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"message":{"content":null},"finish_reason":"stop"}]})", "application/json");
    });
    srv.server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "application/json");
    });
    srv.start();
    HttpProviderConfig c;
    c.endpoint = srv.endpoint();
    c.model = "m";
    HttpChatProvider failing(c);
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, failing), ProviderError);
    c.path = "/null";
    HttpChatProvider null_content(c);
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, null_content), EmptyResponse);
    c.path = "/garbage";
    HttpChatProvider garbage(c);
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, garbage), ProviderError);

    c.path.clear();
    c.api_key_env = "COEVOLVE_TEST_UNSET_KEY";
    unsetenv("COEVOLVE_TEST_UNSET_KEY");
    HttpChatProvider no_key(c);
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, no_key), ProviderError);

    HttpProviderConfig closed;
    closed.endpoint = "http://127.0.0.1:1";
    closed.model = "m";
    HttpChatProvider refused(closed);
    EXPECT_THROW(run_migration(kG1, kG2, kI1, PromptConfig{}, refused), ProviderError);
}
