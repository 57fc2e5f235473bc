#pragma once

// Multi-message migration sessions against a chat-completion provider, with
// a JSONL transcript store for deterministic record and replay.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "coevolve/error.hpp"

namespace coevolve {

struct ChatMessage {
    std::string role;  // "user" or "assistant"
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// Hint templates carry a `{content}` placeholder for the artifact text.
struct PromptConfig {
    std::string grammar1_hint;
    std::string grammar2_hint;
    std::string instance1_hint;
    std::string final_prompt;
    std::size_t max_output_tokens = 64000;

    PromptConfig();
};

const std::string& default_final_prompt();

/// Substitutes `content` for the first `{content}` in `hint`, or appends it
/// after a blank line when the template has no placeholder.
std::string render_hint(const std::string& hint, const std::string& content);

/// The four user messages of a session, in sending order.
std::vector<ChatMessage> build_request(const std::string& grammar_old, const std::string& grammar_new,
                                       const std::string& instance, const PromptConfig& config);

/// Reads `final_prompt`, `max_output_tokens` and the three hints from a JSON
/// object; absent fields keep their defaults.
PromptConfig prompt_config_from_json(const nlohmann::json& j, PromptConfig base = {});

struct Completion {
    std::string content;
    double wall_clock_s = 0.0;
    bool truncated = false;  // the provider stopped at the output budget
};

struct CompletionOptions {
    std::size_t max_output_tokens = 64000;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

class ReplayMiss : public Error {
public:
    using Error::Error;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string id() const = 0;
    virtual Completion complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) = 0;
};

enum class ApiStyle { OpenAI, Anthropic };

struct HttpProviderConfig {
    ApiStyle api_style = ApiStyle::OpenAI;
    std::string endpoint;  // scheme://host[:port]
    std::string path;      // defaults per api style when empty
    std::string model;
    std::string api_key_env;  // name of the environment variable holding the key
    std::string provider_id;  // defaults to the model name
    double timeout_s = 600.0;
};

/// Reads endpoint, model and credentials settings from a JSON object.
HttpProviderConfig http_provider_config_from_json(const nlohmann::json& j);

class HttpChatProvider : public Provider {
public:
    explicit HttpChatProvider(HttpProviderConfig config);
    std::string id() const override;
    Completion complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;

private:
    HttpProviderConfig config_;
};

struct TranscriptRecord {
    std::string key;
    std::string provider_id;
    std::vector<ChatMessage> request_messages;
    std::string response;
    double wall_clock_s = 0.0;
    bool truncated = false;
};

/// SHA-256 (hex) of the canonical JSON of provider id and messages.
std::string transcript_key(const std::string& provider_id, const std::vector<ChatMessage>& messages);

/// Line-delimited JSON records. Reads are concurrent; appends are serialized.
class TranscriptStore {
public:
    TranscriptStore() = default;
    explicit TranscriptStore(std::string path);  // loads the file if it exists

    /// Recordings for a key in recording order.
    std::vector<TranscriptRecord> lookup(const std::string& key) const;
    std::size_t size() const;
    void append(const TranscriptRecord& record);

private:
    std::string path_;
    mutable std::mutex mutex_;
    std::vector<TranscriptRecord> records_;
    std::map<std::string, std::vector<std::size_t>> by_key_;
};

/// Answers from recordings: the k-th request with a given key gets the k-th
/// recording. Unknown or exhausted keys raise ReplayMiss.
class ReplayProvider : public Provider {
public:
    ReplayProvider(std::shared_ptr<const TranscriptStore> store, std::string provider_id);
    std::string id() const override { return provider_id_; }
    Completion complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;
    /// Skips the next recording for this request, as when a stored run is reused.
    void advance(const std::vector<ChatMessage>& messages);

private:
    std::shared_ptr<const TranscriptStore> store_;
    std::string provider_id_;
    std::mutex mutex_;
    std::map<std::string, std::size_t> served_;
};

/// Forwards to another provider and appends every exchange to a store.
class RecordingProvider : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<TranscriptStore> store);
    std::string id() const override { return inner_->id(); }
    Completion complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;

private:
    std::shared_ptr<Provider> inner_;
    std::shared_ptr<TranscriptStore> store_;
};

struct MigrationSession {
    std::vector<ChatMessage> messages;  // four user messages and the assistant response
    std::string provider_id;
    double wall_clock_s = 0.0;
    std::string output;
};

nlohmann::ordered_json session_to_json(const MigrationSession& session);

/// A session that ended without a usable instance; the session is kept.
class SessionError : public Error {
public:
    SessionError(const std::string& message, MigrationSession session);
    const MigrationSession& session() const noexcept { return session_; }

private:
    MigrationSession session_;
};

class EmptyResponse : public SessionError {
public:
    explicit EmptyResponse(MigrationSession session);
};

class TokenBudgetExceeded : public SessionError {
public:
    explicit TokenBudgetExceeded(MigrationSession session);
};

/// Removes one pair of code fences surrounding the whole response.
std::string strip_code_fences(const std::string& response);

MigrationSession run_migration(const std::string& grammar_old, const std::string& grammar_new,
                               const std::string& instance, const PromptConfig& config, Provider& provider);

struct RepetitionResult {
    std::optional<MigrationSession> session;  // also set for EmptyResponse and TokenBudgetExceeded
    std::string error_kind;                    // empty on success
    std::string error_message;
};

/// Runs `n` independent sessions in order. A failing session is recorded and
/// the remaining ones still run. `on_result` sees each result as it finishes.
std::vector<RepetitionResult> run_repetitions(const std::string& grammar_old, const std::string& grammar_new,
                                              const std::string& instance, const PromptConfig& config,
                                              Provider& provider, std::size_t n,
                                              const std::function<void(std::size_t, const RepetitionResult&)>&
                                                  on_result = {});

}  // namespace coevolve
