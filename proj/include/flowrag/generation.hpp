/// @file generation.hpp
/// @brief Completion client interface, a fixture-driven mock, and DSL
/// extraction from raw completion text.

#pragma once

#include "flowrag/grounding.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowrag {

/// Endpoint, credentials or fixture are missing or unusable.
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FinishReason { Completed, Truncated, Refused, TransportError };

inline std::string_view to_string(FinishReason r) noexcept
{
    switch (r) {
    case FinishReason::Completed: return "completed";
    case FinishReason::Truncated: return "truncated";
    case FinishReason::Refused: return "refused";
    case FinishReason::TransportError: return "transport_error";
    }
    return "transport_error";
}

struct CompletionRequest {
    std::string prompt;
    int max_output_tokens = 1024;
    double temperature = 0.0;
    std::vector<std::string> stop_sequences;
    std::string model_name;

    void validate() const
    {
        if (max_output_tokens <= 0)
            throw ConfigurationError("max_output_tokens must be positive");
        if (!(temperature >= 0.0))
            throw ConfigurationError("temperature must be non-negative");
    }
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::Completed;
    std::int64_t latency_ms = 0;
    std::string error; // transport or refusal detail, empty otherwise
};

/// Implementations must be safe to call from several threads.
class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    virtual std::string name() const = 0;
    virtual CompletionResult complete(const CompletionRequest& request) const = 0;
};

/// Lowercase hex SHA-256 of the bytes.
inline std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

/// Applies stop sequences: cut at the earliest occurrence of any of them.
inline std::string apply_stop_sequences(std::string text, const std::vector<std::string>& stops)
{
    std::size_t cut = text.size();
    for (const auto& s : stops)
        if (!s.empty())
            cut = std::min(cut, text.find(s));
    text.resize(cut);
    return text;
}

struct MockOptions {
    bool refuse_all = false;
    std::optional<std::string> fallback; // answer for prompts not in the fixture
};

/// Deterministic client answering from a map of prompt SHA-256 to response.
/// A null fixture value means the prompt is refused. Responses whose token
/// estimate exceeds max_output_tokens are cut to fit and marked truncated.
class MockCompletionClient final : public CompletionClient {
public:
    using Fixture = std::map<std::string, std::optional<std::string>>;

    MockCompletionClient() = default;
    explicit MockCompletionClient(Fixture fixture, MockOptions options = {})
        : fixture_(std::move(fixture)), options_(std::move(options))
    {
    }

    static MockCompletionClient refusing() { return MockCompletionClient({}, MockOptions{true, std::nullopt}); }

    static Fixture fixture_from_json(const nlohmann::json& j)
    {
        if (!j.is_object())
            throw ConfigurationError("mock fixture must be a JSON object of prompt hash to text");
        Fixture f;
        for (const auto& [key, value] : j.items()) {
            if (value.is_null())
                f.emplace(key, std::nullopt);
            else if (value.is_string())
                f.emplace(key, value.get<std::string>());
            else
                throw ConfigurationError("mock fixture entry '" + key + "' must be a string or null");
        }
        return f;
    }

    static nlohmann::ordered_json fixture_to_json(const Fixture& f)
    {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& [key, value] : f)
            j[key] = value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
        return j;
    }

    static void write_fixture(const std::filesystem::path& path, const Fixture& f)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw ConfigurationError("cannot write mock fixture " + path.string());
        out << fixture_to_json(f).dump(2) << '\n';
    }

    static MockCompletionClient from_file(const std::filesystem::path& path, MockOptions options = {})
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ConfigurationError("cannot open mock fixture " + path.string());
        try {
            return MockCompletionClient(fixture_from_json(nlohmann::json::parse(in)), std::move(options));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigurationError("malformed mock fixture " + path.string() + ": " + e.what());
        }
    }

    std::string name() const override { return "mock"; }
    const Fixture& fixture() const noexcept { return fixture_; }

    CompletionResult complete(const CompletionRequest& request) const override
    {
        request.validate();
        CompletionResult r;
        if (options_.refuse_all) {
            r.finish_reason = FinishReason::Refused;
            r.error = "refused by configuration";
            return r;
        }
        const auto hash = sha256_hex(request.prompt);
        const std::optional<std::string>* answer = nullptr;
        if (auto it = fixture_.find(hash); it != fixture_.end())
            answer = &it->second;
        else if (options_.fallback)
            answer = &options_.fallback;
        if (!answer) {
            r.finish_reason = FinishReason::TransportError;
            r.error = "no fixture entry for prompt " + hash;
            return r;
        }
        if (!answer->has_value()) {
            r.finish_reason = FinishReason::Refused;
            r.error = "fixture refuses prompt " + hash;
            return r;
        }
        r.text = apply_stop_sequences(**answer, request.stop_sequences);
        const auto ceiling = static_cast<std::size_t>(request.max_output_tokens);
        if (estimate_tokens(r.text) > ceiling) {
            r.text.resize(ceiling * 4);
            r.finish_reason = FinishReason::Truncated;
        } else if (r.text.empty()) {
            r.finish_reason = FinishReason::Refused;
            r.error = "empty completion";
        }
        return r;
    }

private:
    Fixture fixture_;
    MockOptions options_;
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace detail

/// First fenced block when present (an unclosed fence runs to the end),
/// otherwise the whole text, trimmed either way.
inline std::string extract_dsl(std::string_view raw)
{
    const auto open = raw.find("```");
    if (open == std::string_view::npos)
        return std::string(detail::trim(raw));
    auto body_start = raw.find('\n', open + 3);
    const auto same_line_close = raw.find("```", open + 3);
    if (same_line_close < body_start) // one-line fence: ```x = a.F({});```
        return std::string(detail::trim(raw.substr(open + 3, same_line_close - open - 3)));
    if (body_start == std::string_view::npos)
        return std::string(detail::trim(raw.substr(open + 3)));
    ++body_start;
    const auto close = raw.find("```", body_start);
    const auto body = raw.substr(body_start, close == std::string_view::npos ? raw.npos : close - body_start);
    return std::string(detail::trim(body));
}

} // namespace flowrag
