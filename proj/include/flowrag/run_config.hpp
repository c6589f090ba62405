/// @file run_config.hpp
/// @brief JSON run configuration: datasets, catalog, embedders, completion
/// client and the experiment list. Relative paths resolve against the
/// configuration file's directory.
///
/// ```json
/// {
///   "dataset": {"train": "train.jsonl", "test": "test.jsonl"},
///   "catalog": "catalog.json",
///   "embedders": {
///     "pretrained": {"type": "hashing", "dimension": 256},
///     "tst": {"type": "hashing", "dimension": 256, "salt": "tst"}
///   },
///   "client": {"type": "mock", "fixture": "fixture.json"},
///   "generation": {"max_output_tokens": 1024, "temperature": 0, "model": "", "stop": []},
///   "prompt_template": "template.txt",
///   "concurrency": 8,
///   "store_full_prompts": false,
///   "baseline": "Pre-trained 5-shot w/o FD",
///   "grid": true,
///   "experiments": [
///     {"name": "TST + FD", "selection_model": "tst", "few_shot_count": 20, "include_fd": true,
///      "include_sfd": false, "sfd_count": 5, "token_budget": 16000, "test": "ood.jsonl", "baseline": "..."}
///   ]
/// }
/// ```

#pragma once

#include "flowrag/harness.hpp"
#include "flowrag/http.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowrag {

struct RunConfig {
    std::filesystem::path base_dir;
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    std::filesystem::path catalog_path;
    std::optional<std::filesystem::path> prompt_template_path;
    nlohmann::json embedders = nlohmann::json::object();
    nlohmann::json client = {{"type", "mock"}};
    RunOptions options;
    std::optional<std::string> baseline;
    std::vector<ExperimentSpec> experiments;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return fallback;
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigurationError(where + ": field '" + key + "' has the wrong type");
    }
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base)
{
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
        throw ConfigurationError("every experiment needs a string \"name\"");
    ExperimentSpec spec;
    spec.name = j["name"].get<std::string>();
    const std::string where = "experiment '" + spec.name + "'";
    spec.selection_model = get_or<std::string>(j, "selection_model", "tst", where);
    auto& g = spec.grounding;
    g.few_shot_count = get_or<std::size_t>(j, "few_shot_count", g.few_shot_count, where);
    g.include_fd = get_or<bool>(j, "include_fd", g.include_fd, where);
    g.include_sfd = get_or<bool>(j, "include_sfd", g.include_sfd, where);
    g.sfd_count = get_or<std::size_t>(j, "sfd_count", g.sfd_count, where);
    g.token_budget = get_or<std::size_t>(j, "token_budget", g.token_budget, where);
    g.system_instructions = get_or<std::string>(j, "system_instructions", g.system_instructions, where);
    if (j.contains("test") && !j["test"].is_null())
        spec.test_path = resolve(base, get_or<std::string>(j, "test", "", where));
    if (j.contains("baseline") && !j["baseline"].is_null())
        spec.baseline_name = get_or<std::string>(j, "baseline", "", where);
    try {
        g.validate();
    } catch (const GroundingError& e) {
        throw ConfigurationError(where + ": " + e.what());
    }
    return spec;
}

inline HttpEndpoint endpoint_from_json(const nlohmann::json& j, const char* default_path, const char* url_env,
                                       const std::string& where)
{
    HttpEndpoint ep;
    ep.base_url = get_or<std::string>(j, "url", env_value(url_env).value_or(""), where);
    ep.path = get_or<std::string>(j, "path", default_path, where);
    const auto key_env = get_or<std::string>(j, "api_key_env", "FLOWRAG_API_KEY", where);
    ep.api_key = env_value(key_env.c_str()).value_or("");
    ep.max_retries = get_or<int>(j, "max_retries", ep.max_retries, where);
    ep.initial_backoff_ms = get_or<int>(j, "initial_backoff_ms", ep.initial_backoff_ms, where);
    ep.timeout_seconds = get_or<int>(j, "timeout_seconds", ep.timeout_seconds, where);
    return ep;
}

} // namespace detail

/// Defaults: two hashing embedders with distinct salts stand in for the
/// pretrained and TST encoders when the configuration names none.
inline nlohmann::json default_embedders()
{
    return {{"pretrained", {{"type", "hashing"}, {"dimension", 256}, {"salt", ""}}},
            {"tst", {{"type", "hashing"}, {"dimension", 256}, {"salt", "tst"}}}};
}

inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object())
        throw ConfigurationError("run configuration must be a JSON object");
    RunConfig cfg;
    cfg.base_dir = base_dir;
    const std::string where = "run configuration";
    const auto dataset = j.value("dataset", nlohmann::json::object());
    if (!dataset.is_object() || !dataset.contains("train") || !dataset.contains("test"))
        throw ConfigurationError("run configuration needs dataset.train and dataset.test");
    cfg.train_path = detail::resolve(base_dir, detail::get_or<std::string>(dataset, "train", "", where));
    cfg.test_path = detail::resolve(base_dir, detail::get_or<std::string>(dataset, "test", "", where));
    if (!j.contains("catalog"))
        throw ConfigurationError("run configuration needs a catalog path");
    cfg.catalog_path = detail::resolve(base_dir, detail::get_or<std::string>(j, "catalog", "", where));
    if (j.contains("prompt_template") && !j["prompt_template"].is_null())
        cfg.prompt_template_path =
            detail::resolve(base_dir, detail::get_or<std::string>(j, "prompt_template", "", where));

    cfg.embedders = default_embedders();
    if (j.contains("embedders")) {
        if (!j["embedders"].is_object())
            throw ConfigurationError("\"embedders\" must be an object");
        for (const auto& [name, value] : j["embedders"].items())
            cfg.embedders[name] = value;
    }
    if (j.contains("client"))
        cfg.client = j["client"];

    const auto gen = j.value("generation", nlohmann::json::object());
    auto& g = cfg.options.generation;
    g.max_output_tokens = detail::get_or<int>(gen, "max_output_tokens", g.max_output_tokens, where);
    g.temperature = detail::get_or<double>(gen, "temperature", g.temperature, where);
    g.model_name = detail::get_or<std::string>(gen, "model", g.model_name, where);
    g.stop_sequences = detail::get_or<std::vector<std::string>>(gen, "stop", g.stop_sequences, where);
    cfg.options.concurrency = detail::get_or<std::size_t>(j, "concurrency", cfg.options.concurrency, where);
    cfg.options.store_full_prompts = detail::get_or<bool>(j, "store_full_prompts", false, where);
    if (j.contains("baseline") && !j["baseline"].is_null())
        cfg.baseline = detail::get_or<std::string>(j, "baseline", "", where);

    if (detail::get_or<bool>(j, "grid", false, where))
        cfg.experiments = ablation_grid();
    if (j.contains("experiments")) {
        if (!j["experiments"].is_array())
            throw ConfigurationError("\"experiments\" must be an array");
        for (const auto& e : j["experiments"])
            cfg.experiments.push_back(detail::experiment_from_json(e, base_dir));
    }
    if (cfg.experiments.empty())
        throw ConfigurationError("run configuration lists no experiments");
    std::set<std::string, std::less<>> names;
    for (const auto& e : cfg.experiments)
        if (!names.insert(e.name).second)
            throw ConfigurationError("duplicate experiment name '" + e.name + "'");
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigurationError("cannot open run configuration " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("malformed run configuration " + path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

inline std::shared_ptr<const Embedder> make_embedder(const std::string& name, const nlohmann::json& j)
{
    const std::string where = "embedder '" + name + "'";
    const auto type = detail::get_or<std::string>(j, "type", "hashing", where);
    if (type == "hashing")
        return std::make_shared<HashingEmbedder>(detail::get_or<std::size_t>(j, "dimension", 256, where),
                                                 detail::get_or<std::string>(j, "salt", "", where));
    if (type == "http") {
        HttpEmbedderConfig cfg;
        cfg.endpoint = detail::endpoint_from_json(j, "/v1/embeddings", "FLOWRAG_EMBEDDING_URL", where);
        cfg.model = detail::get_or<std::string>(j, "model", "", where);
        cfg.dimension = detail::get_or<std::size_t>(j, "dimension", 0, where);
        cfg.batch_size = detail::get_or<std::size_t>(j, "batch_size", cfg.batch_size, where);
        return std::make_shared<HttpEmbedder>(std::move(cfg));
    }
    throw ConfigurationError(where + ": unknown type '" + type + "'");
}

inline std::map<std::string, std::shared_ptr<const Embedder>> make_embedders(const nlohmann::json& j)
{
    std::map<std::string, std::shared_ptr<const Embedder>> out;
    for (const auto& [name, value] : j.items())
        out.emplace(name, make_embedder(name, value));
    return out;
}

/// `fixture_override` replaces a mock client's fixture path.
inline std::unique_ptr<CompletionClient> make_client(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                                     const std::optional<std::filesystem::path>& fixture_override = {})
{
    const std::string where = "client";
    const auto type = detail::get_or<std::string>(j, "type", "mock", where);
    if (type == "mock") {
        MockOptions options;
        options.refuse_all = detail::get_or<bool>(j, "refuse_all", false, where);
        if (j.contains("fallback") && !j["fallback"].is_null())
            options.fallback = detail::get_or<std::string>(j, "fallback", "", where);
        std::optional<std::filesystem::path> fixture = fixture_override;
        if (!fixture && j.contains("fixture") && !j["fixture"].is_null())
            fixture = detail::resolve(base_dir, detail::get_or<std::string>(j, "fixture", "", where));
        if (fixture)
            return std::make_unique<MockCompletionClient>(MockCompletionClient::from_file(*fixture, options));
        return std::make_unique<MockCompletionClient>(MockCompletionClient::Fixture{}, options);
    }
    if (type == "http") {
        HttpCompletionConfig cfg;
        cfg.endpoint = detail::endpoint_from_json(j, "/v1/chat/completions", "FLOWRAG_COMPLETION_URL", where);
        if (j.contains("payload_template"))
            cfg.payload_template = j["payload_template"];
        cfg.text_pointer = detail::get_or<std::string>(j, "text_pointer", cfg.text_pointer, where);
        cfg.finish_pointer = detail::get_or<std::string>(j, "finish_pointer", cfg.finish_pointer, where);
        return std::make_unique<HttpCompletionClient>(std::move(cfg));
    }
    throw ConfigurationError(where + ": unknown type '" + type + "'");
}

/// Loaded datasets and context for a configuration, with per-experiment
/// test sets cached by path.
class ConfiguredRun {
public:
    explicit ConfiguredRun(RunConfig config)
        : config_(std::move(config)),
          context_(load_catalog_file(config_.catalog_path), load_dataset(config_.train_path),
                   make_embedders(config_.embedders),
                   config_.prompt_template_path ? PromptTemplate::load(*config_.prompt_template_path)
                                                : PromptTemplate{})
    {
        tests_.emplace(config_.test_path.string(), load_dataset(config_.test_path));
    }

    const RunConfig& config() const noexcept { return config_; }
    ExperimentContext& context() noexcept { return context_; }

    const std::vector<Sample>& tests_for(const ExperimentSpec& spec)
    {
        const auto path = spec.test_path.value_or(config_.test_path);
        auto it = tests_.find(path.string());
        if (it == tests_.end())
            it = tests_.emplace(path.string(), load_dataset(path)).first;
        return it->second;
    }

    /// Echo fixture over every experiment: each rendered prompt maps to its gold flow.
    MockCompletionClient::Fixture echo_fixture()
    {
        MockCompletionClient::Fixture merged;
        for (const auto& spec : config_.experiments)
            for (auto& [hash, text] : flowrag::echo_fixture(spec, context_, tests_for(spec)))
                merged[hash] = std::move(text);
        return merged;
    }

    std::vector<RunRecord> run_all(const CompletionClient& client)
    {
        std::vector<RunRecord> records;
        for (const auto& spec : config_.experiments)
            records.push_back(run_experiment(spec, context_, tests_for(spec), client, config_.options));
        return records;
    }

private:
    RunConfig config_;
    ExperimentContext context_;
    std::map<std::string, std::vector<Sample>> tests_;
};

} // namespace flowrag
