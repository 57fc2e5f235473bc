#include "httplib.h"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "coevolve/llm_migrator.hpp"

namespace coevolve {

namespace {

using nlohmann::json;

json messages_to_json(const std::vector<ChatMessage>& messages) {
    json out = json::array();
    for (const auto& m : messages) out.push_back({{"role", m.role}, {"content", m.content}});
    return out;
}

std::vector<ChatMessage> messages_from_json(const json& j) {
    std::vector<ChatMessage> out;
    for (const auto& m : j) out.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    return out;
}

TranscriptRecord record_from_json(const json& j) {
    TranscriptRecord r;
    r.key = j.at("key").get<std::string>();
    r.provider_id = j.value("provider_id", std::string{});
    if (j.contains("request_messages")) r.request_messages = messages_from_json(j.at("request_messages"));
    r.response = j.at("response").get<std::string>();
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.truncated = j.value("truncated", false);
    return r;
}

std::string record_to_line(const TranscriptRecord& r) {
    nlohmann::ordered_json j;
    j["key"] = r.key;
    j["provider_id"] = r.provider_id;
    j["request_messages"] = messages_to_json(r.request_messages);
    j["response"] = r.response;
    j["wall_clock_s"] = r.wall_clock_s;
    if (r.truncated) j["truncated"] = true;
    return j.dump() + "\n";
}

}  // namespace

std::string transcript_key(const std::string& provider_id, const std::vector<ChatMessage>& messages) {
    const json canonical = {{"messages", messages_to_json(messages)}, {"provider_id", provider_id}};
    const std::string text = canonical.dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < length; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

TranscriptStore::TranscriptStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records_.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(path_ + ":" + std::to_string(line_no) + ": bad transcript record: " + e.what());
        }
        by_key_[records_.back().key].push_back(records_.size() - 1);
    }
}

std::vector<TranscriptRecord> TranscriptStore::lookup(const std::string& key) const {
    std::lock_guard lock(mutex_);
    std::vector<TranscriptRecord> out;
    if (auto it = by_key_.find(key); it != by_key_.end())
        for (std::size_t i : it->second) out.push_back(records_[i]);
    return out;
}

std::size_t TranscriptStore::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

void TranscriptStore::append(const TranscriptRecord& record) {
    std::lock_guard lock(mutex_);
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw Error("cannot append to transcript store " + path_);
        out << record_to_line(record);
    }
    records_.push_back(record);
    by_key_[record.key].push_back(records_.size() - 1);
}

ReplayProvider::ReplayProvider(std::shared_ptr<const TranscriptStore> store, std::string provider_id)
    : store_(std::move(store)), provider_id_(std::move(provider_id)) {}

Completion ReplayProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions&) {
    const std::string key = transcript_key(provider_id_, messages);
    const auto records = store_->lookup(key);
    std::size_t k;
    {
        std::lock_guard lock(mutex_);
        k = served_[key]++;
    }
    if (records.empty()) throw ReplayMiss("no recording for key " + key + " (provider " + provider_id_ + ")");
    if (k >= records.size())
        throw ReplayMiss("key " + key + " has " + std::to_string(records.size()) + " recording(s); request " +
                         std::to_string(k + 1) + " has none");
    const auto& r = records[k];
    return {r.response, r.wall_clock_s, r.truncated};
}

void ReplayProvider::advance(const std::vector<ChatMessage>& messages) {
    std::lock_guard lock(mutex_);
    ++served_[transcript_key(provider_id_, messages)];
}

RecordingProvider::RecordingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<TranscriptStore> store)
    : inner_(std::move(inner)), store_(std::move(store)) {}

Completion RecordingProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) {
    Completion c = inner_->complete(messages, options);
    store_->append({transcript_key(inner_->id(), messages), inner_->id(), messages, c.content, c.wall_clock_s,
                    c.truncated});
    return c;
}

HttpProviderConfig http_provider_config_from_json(const json& j) {
    HttpProviderConfig c;
    const std::string style = j.value("api_style", std::string{"openai"});
    if (style == "openai")
        c.api_style = ApiStyle::OpenAI;
    else if (style == "anthropic")
        c.api_style = ApiStyle::Anthropic;
    else
        throw Error("unknown api_style '" + style + "' (expected openai or anthropic)");
    c.endpoint = j.at("endpoint").get<std::string>();
    c.path = j.value("path", std::string{});
    c.model = j.at("model").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string{});
    c.provider_id = j.value("provider_id", std::string{});
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    return c;
}

HttpChatProvider::HttpChatProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.path.empty())
        config_.path = config_.api_style == ApiStyle::OpenAI ? "/v1/chat/completions" : "/v1/messages";
    if (config_.provider_id.empty()) config_.provider_id = config_.model;
}

std::string HttpChatProvider::id() const { return config_.provider_id; }

Completion HttpChatProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) {
    std::string key;
    if (!config_.api_key_env.empty()) {
        const char* v = std::getenv(config_.api_key_env.c_str());
        if (!v || !*v) throw ProviderError("environment variable " + config_.api_key_env + " is not set");
        key = v;
    }
    httplib::Headers headers;
    json body = {{"model", config_.model}, {"messages", messages_to_json(messages)}};
    if (config_.api_style == ApiStyle::OpenAI) {
        body["max_completion_tokens"] = options.max_output_tokens;
        if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    } else {
        body["max_tokens"] = options.max_output_tokens;
        headers.emplace("anthropic-version", "2023-06-01");
        if (!key.empty()) headers.emplace("x-api-key", key);
    }

    httplib::Client client(config_.endpoint);
    const auto seconds = static_cast<time_t>(config_.timeout_s);
    client.set_connection_timeout(30);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) throw ProviderError("request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body);

    Completion c;
    c.wall_clock_s = elapsed;
    try {
        const json reply = json::parse(res->body);
        if (config_.api_style == ApiStyle::OpenAI) {
            const auto& choice = reply.at("choices").at(0);
            const auto& content = choice.at("message").at("content");
            if (content.is_string()) c.content = content.get<std::string>();
            c.truncated = choice.value("finish_reason", std::string{}) == "length";
        } else {
            for (const auto& block : reply.at("content"))
                if (block.value("type", std::string{}) == "text") c.content += block.at("text").get<std::string>();
            c.truncated = reply.value("stop_reason", std::string{}) == "max_tokens";
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed provider reply: ") + e.what());
    }
    return c;
}

}  // namespace coevolve
