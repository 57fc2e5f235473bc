#include "coevolve/llm_migrator.hpp"

namespace coevolve {

namespace {

const std::string kFinalPrompt =
    "grammar_1 is the initial grammar of the DSL. We evolved it to get grammar_2. instance_1 was originally a "
    "text instance that followed grammar_1. Now I want you to analyze the differences between the two versions "
    "of the grammar and, based on this difference, modify instance_1 and get instance_2, which will follow "
    "grammar_2. Please address the following things:\n"
    "1.\tWhen evolving the instance, please do not omit any mandatory elements, such as characters enclosed by "
    "single quotes.\n"
    "2.\tIf grammar_2 adds a new grammar rule or a new attribute that is optional or in an \"OR\" relationship "
    "(i.e., |), then please do not instantiate it.\n"
    "3.\tDo not miss or add any auxiliary information in the instance, e.g., comments, formats (white space, "
    "indents, tabs, empty lines, etc.).";

const std::string kPlaceholder = "{content}";

}  // namespace

const std::string& default_final_prompt() { return kFinalPrompt; }

PromptConfig::PromptConfig()
    : grammar1_hint("Here is the initial version of the grammar (i.e., Grammar 1). Please remember this for future "
                    "reference.\n\n{content}"),
      grammar2_hint("Here is the evolved version of the grammar (i.e., Grammar 2). Please remember this for future "
                    "reference.\n\n{content}"),
      instance1_hint("Here is the initial version of the instance (i.e., Instance 1), which follows Grammar 1. "
                     "Please remember this for future reference.\n\n{content}"),
      final_prompt(kFinalPrompt) {}

std::string render_hint(const std::string& hint, const std::string& content) {
    const auto at = hint.find(kPlaceholder);
    if (at == std::string::npos) return hint + "\n\n" + content;
    return hint.substr(0, at) + content + hint.substr(at + kPlaceholder.size());
}

std::vector<ChatMessage> build_request(const std::string& grammar_old, const std::string& grammar_new,
                                       const std::string& instance, const PromptConfig& config) {
    return {
        {"user", render_hint(config.grammar1_hint, grammar_old)},
        {"user", render_hint(config.grammar2_hint, grammar_new)},
        {"user", render_hint(config.instance1_hint, instance)},
        {"user", config.final_prompt},
    };
}

PromptConfig prompt_config_from_json(const nlohmann::json& j, PromptConfig base) {
    if (!j.is_object()) throw Error("prompt configuration must be a JSON object");
    auto read = [&](const char* field, std::string& into) {
        if (j.contains(field)) into = j.at(field).get<std::string>();
    };
    read("grammar1_hint", base.grammar1_hint);
    read("grammar2_hint", base.grammar2_hint);
    read("instance1_hint", base.instance1_hint);
    read("final_prompt", base.final_prompt);
    if (j.contains("max_output_tokens")) base.max_output_tokens = j.at("max_output_tokens").get<std::size_t>();
    if (base.max_output_tokens == 0) throw Error("max_output_tokens must be positive");
    return base;
}

nlohmann::ordered_json session_to_json(const MigrationSession& session) {
    nlohmann::ordered_json j;
    j["provider_id"] = session.provider_id;
    j["wall_clock_s"] = session.wall_clock_s;
    auto& messages = j["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : session.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    j["output"] = session.output;
    return j;
}

SessionError::SessionError(const std::string& message, MigrationSession session)
    : Error(message), session_(std::move(session)) {}

EmptyResponse::EmptyResponse(MigrationSession session)
    : SessionError("provider " + session.provider_id + " returned no content", std::move(session)) {}

TokenBudgetExceeded::TokenBudgetExceeded(MigrationSession session)
    : SessionError("provider " + session.provider_id + " stopped at the output token budget", std::move(session)) {}

std::string strip_code_fences(const std::string& response) {
    const auto first = response.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || response.compare(first, 3, "```") != 0) return response;
    const auto body = response.find('\n', first);
    if (body == std::string::npos) return response;
    const auto last = response.find_last_not_of(" \t\r\n");
    const auto close_line = response.rfind('\n', last);
    if (close_line == std::string::npos || close_line < body) return response;
    const std::string closing = response.substr(close_line + 1, last + 1 - close_line - 1);
    if (closing.find_first_not_of(" \t") == std::string::npos ||
        closing.substr(closing.find_first_not_of(" \t")) != "```")
        return response;
    return response.substr(body + 1, close_line + 1 - (body + 1));
}

MigrationSession run_migration(const std::string& grammar_old, const std::string& grammar_new,
                               const std::string& instance, const PromptConfig& config, Provider& provider) {
    if (config.max_output_tokens == 0) throw Error("max_output_tokens must be positive");
    MigrationSession session;
    session.provider_id = provider.id();
    session.messages = build_request(grammar_old, grammar_new, instance, config);
    const Completion c = provider.complete(session.messages, {config.max_output_tokens});
    session.wall_clock_s = c.wall_clock_s < 0 ? 0.0 : c.wall_clock_s;
    session.messages.push_back({"assistant", c.content});
    session.output = strip_code_fences(c.content);
    if (c.truncated) throw TokenBudgetExceeded(std::move(session));
    if (c.content.find_first_not_of(" \t\r\n") == std::string::npos) {
        session.output.clear();
        throw EmptyResponse(std::move(session));
    }
    return session;
}

std::vector<RepetitionResult> run_repetitions(const std::string& grammar_old, const std::string& grammar_new,
                                              const std::string& instance, const PromptConfig& config,
                                              Provider& provider, std::size_t n,
                                              const std::function<void(std::size_t, const RepetitionResult&)>&
                                                  on_result) {
    if (n == 0) throw Error("repetitions must be at least 1");
    std::vector<RepetitionResult> results;
    for (std::size_t k = 0; k < n; ++k) {
        RepetitionResult r;
        try {
            r.session = run_migration(grammar_old, grammar_new, instance, config, provider);
        } catch (const EmptyResponse& e) {
            r.session = e.session();
            r.error_kind = "EmptyResponse";
            r.error_message = e.what();
        } catch (const TokenBudgetExceeded& e) {
            r.session = e.session();
            r.error_kind = "TokenBudgetExceeded";
            r.error_message = e.what();
        } catch (const ReplayMiss& e) {
            r.error_kind = "ReplayMiss";
            r.error_message = e.what();
        } catch (const ProviderError& e) {
            r.error_kind = "ProviderError";
            r.error_message = e.what();
        }
        if (on_result) on_result(k, r);
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace coevolve
