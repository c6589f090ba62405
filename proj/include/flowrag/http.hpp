/// @file http.hpp
/// @brief HTTP JSON clients for completion and embedding services.
///
/// Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT for https URLs.

#pragma once

#include "flowrag/generation.hpp"
#include "flowrag/retrieval.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace flowrag {

struct HttpEndpoint {
    std::string base_url; // scheme://host[:port]
    std::string path;
    std::string api_key; // sent as a bearer token when non-empty
    int max_retries = 3;
    int initial_backoff_ms = 500;
    int timeout_seconds = 120;
};

/// Value of an environment variable, or nullopt when unset or empty.
inline std::optional<std::string> env_value(const char* name)
{
    const char* v = std::getenv(name);
    if (!v || !*v)
        return std::nullopt;
    return std::string(v);
}

namespace detail {

struct HttpOutcome {
    int status = 0; // 0 when no response arrived
    std::string body;
    std::string error;
    int attempts = 0;
};

inline bool retryable_status(int status) noexcept { return status == 429 || status >= 500; }

/// POSTs JSON, retrying connection failures, 429 and 5xx with exponential backoff.
inline HttpOutcome post_json(const HttpEndpoint& ep, const std::string& body)
{
    HttpOutcome out;
    for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(ep.initial_backoff_ms) * (1 << (attempt - 1)));
        out.attempts = attempt + 1;
        httplib::Client client(ep.base_url);
        client.set_connection_timeout(ep.timeout_seconds);
        client.set_read_timeout(ep.timeout_seconds);
        client.set_write_timeout(ep.timeout_seconds);
        httplib::Headers headers;
        if (!ep.api_key.empty())
            headers.emplace("Authorization", "Bearer " + ep.api_key);
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (!res) {
            out.status = 0;
            out.body.clear();
            out.error = "request to " + ep.base_url + ep.path + " failed: " + httplib::to_string(res.error());
            continue;
        }
        out.status = res->status;
        out.body = res->body;
        out.error.clear();
        if (!retryable_status(res->status))
            return out;
        out.error = "HTTP " + std::to_string(res->status);
    }
    return out;
}

/// Replaces string values that are exactly a placeholder with typed values.
inline void fill_template(nlohmann::json& node, const nlohmann::json& values)
{
    if (node.is_string()) {
        const auto& s = node.get_ref<const std::string&>();
        if (s.size() > 2 && s.front() == '{' && s.back() == '}') {
            if (auto it = values.find(s.substr(1, s.size() - 2)); it != values.end())
                node = *it;
        }
    } else if (node.is_structured()) {
        for (auto& child : node)
            fill_template(child, values);
    }
}

} // namespace detail

struct HttpCompletionConfig {
    HttpEndpoint endpoint{"", "/v1/chat/completions"};
    /// Placeholders: "{prompt}", "{model}", "{max_tokens}", "{temperature}", "{stop}".
    nlohmann::json payload_template = {
        {"model", "{model}"},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", "{prompt}"}}})},
        {"max_tokens", "{max_tokens}"},
        {"temperature", "{temperature}"},
        {"stop", "{stop}"},
    };
    std::string text_pointer = "/choices/0/message/content";
    std::string finish_pointer = "/choices/0/finish_reason";
};

/// Chat/completions-style client. Refusals are never retried.
class HttpCompletionClient final : public CompletionClient {
public:
    explicit HttpCompletionClient(HttpCompletionConfig config) : config_(std::move(config))
    {
        if (config_.endpoint.base_url.empty())
            throw ConfigurationError("completion endpoint URL is not configured");
        if (config_.endpoint.api_key.empty())
            throw ConfigurationError("completion API key is not configured");
    }

    /// Fills URL and key from FLOWRAG_COMPLETION_URL and FLOWRAG_API_KEY when unset.
    static HttpCompletionClient from_env(HttpCompletionConfig config = {})
    {
        if (config.endpoint.base_url.empty())
            config.endpoint.base_url = env_value("FLOWRAG_COMPLETION_URL").value_or("");
        if (config.endpoint.api_key.empty())
            config.endpoint.api_key = env_value("FLOWRAG_API_KEY").value_or("");
        return HttpCompletionClient(std::move(config));
    }

    std::string name() const override { return "http:" + config_.endpoint.base_url + config_.endpoint.path; }

    nlohmann::json payload(const CompletionRequest& request) const
    {
        nlohmann::json body = config_.payload_template;
        detail::fill_template(body, {{"prompt", request.prompt},
                                     {"model", request.model_name},
                                     {"max_tokens", request.max_output_tokens},
                                     {"temperature", request.temperature},
                                     {"stop", request.stop_sequences}});
        return body;
    }

    CompletionResult complete(const CompletionRequest& request) const override
    {
        request.validate();
        const auto start = std::chrono::steady_clock::now();
        const auto outcome = detail::post_json(config_.endpoint, payload(request).dump());
        CompletionResult r;
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                           .count();
        if (outcome.status != 200) {
            r.finish_reason = FinishReason::TransportError;
            r.error = outcome.error.empty() ? "HTTP " + std::to_string(outcome.status) + ": " + outcome.body
                                            : outcome.error;
            r.error += " after " + std::to_string(outcome.attempts) + " attempt(s)";
            return r;
        }
        try {
            const auto j = nlohmann::json::parse(outcome.body);
            const nlohmann::json::json_pointer text_ptr(config_.text_pointer);
            const nlohmann::json::json_pointer finish_ptr(config_.finish_pointer);
            const std::string finish =
                j.contains(finish_ptr) && j.at(finish_ptr).is_string() ? j.at(finish_ptr).get<std::string>() : "stop";
            if (j.contains(text_ptr) && j.at(text_ptr).is_string())
                r.text = j.at(text_ptr).get<std::string>();
            if (finish == "content_filter") {
                r.finish_reason = FinishReason::Refused;
                r.error = "content filter";
                r.text.clear();
            } else if (finish == "length") {
                r.finish_reason = FinishReason::Truncated;
            } else if (r.text.empty()) {
                r.finish_reason = FinishReason::Refused;
                r.error = "empty completion";
            }
        } catch (const nlohmann::json::exception& e) {
            r = CompletionResult{{}, FinishReason::TransportError, r.latency_ms,
                                 std::string("malformed completion response: ") + e.what()};
        }
        return r;
    }

private:
    HttpCompletionConfig config_;
};

struct HttpEmbedderConfig {
    HttpEndpoint endpoint{"", "/v1/embeddings"};
    std::string model;
    std::size_t dimension = 0;
    std::size_t batch_size = 64;
};

/// POSTs {"model", "input": [texts]} and reads data[].embedding ordered by index.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config))
    {
        if (config_.endpoint.base_url.empty())
            throw ConfigurationError("embedding endpoint URL is not configured");
        if (config_.dimension == 0)
            throw ConfigurationError("embedding dimension is not configured");
        if (config_.batch_size == 0)
            config_.batch_size = 1;
    }

    /// Fills URL and key from FLOWRAG_EMBEDDING_URL and FLOWRAG_API_KEY when unset.
    static HttpEmbedder from_env(HttpEmbedderConfig config)
    {
        if (config.endpoint.base_url.empty())
            config.endpoint.base_url = env_value("FLOWRAG_EMBEDDING_URL").value_or("");
        if (config.endpoint.api_key.empty())
            config.endpoint.api_key = env_value("FLOWRAG_API_KEY").value_or("");
        return HttpEmbedder(std::move(config));
    }

    std::string name() const override { return "http-" + config_.model; }
    std::size_t dimension() const override { return config_.dimension; }

    EmbeddingVector embed(std::string_view text) const override
    {
        const std::string one(text);
        return embed_batch(std::span<const std::string>(&one, 1)).front();
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override
    {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (std::size_t begin = 0; begin < texts.size(); begin += config_.batch_size) {
            const auto chunk = texts.subspan(begin, std::min(config_.batch_size, texts.size() - begin));
            for (auto& v : request(chunk))
                out.push_back(std::move(v));
        }
        return out;
    }

private:
    std::vector<EmbeddingVector> request(std::span<const std::string> texts) const
    {
        const nlohmann::json body = {{"model", config_.model},
                                     {"input", std::vector<std::string>(texts.begin(), texts.end())}};
        const auto outcome = detail::post_json(config_.endpoint, body.dump());
        if (outcome.status != 200)
            throw RetrievalError("embedding request failed: " +
                                 (outcome.error.empty() ? "HTTP " + std::to_string(outcome.status) : outcome.error));
        try {
            const auto j = nlohmann::json::parse(outcome.body);
            const auto& data = j.at("data");
            if (data.size() != texts.size())
                throw RetrievalError("embedding service returned " + std::to_string(data.size()) + " vectors for " +
                                     std::to_string(texts.size()) + " inputs");
            std::vector<std::optional<EmbeddingVector>> slots(texts.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                const auto index = data[i].value("index", i);
                if (index >= slots.size() || slots[index])
                    throw RetrievalError("embedding service returned an invalid index " + std::to_string(index));
                EmbeddingVector v{data[i].at("embedding").get<std::vector<double>>(), false};
                if (v.dimension() != config_.dimension)
                    throw RetrievalError("embedding service returned dimension " + std::to_string(v.dimension()) +
                                         ", expected " + std::to_string(config_.dimension));
                slots[index] = std::move(v);
            }
            std::vector<EmbeddingVector> out;
            for (auto& s : slots)
                out.push_back(std::move(*s));
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw RetrievalError(std::string("malformed embedding response: ") + e.what());
        }
    }

    HttpEmbedderConfig config_;
};

} // namespace flowrag
