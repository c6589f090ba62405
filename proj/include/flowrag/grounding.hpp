/// @file grounding.hpp
/// @brief Metaprompt assembly: few-shots, function definitions (FD), and
/// semantically retrieved function definitions (SFD) under a token budget.
///
/// Default layout, sections separated by a blank line and omitted when empty:
///
///     <instructions>
///
///     Function definitions:
///     <definition>
///
///     <definition>
///
///     Examples:
///     Query: <prompt>
///     DSL:
///     <flow>
///     ---
///     Query: <prompt>
///     DSL:
///     <flow>
///
///     Query: <user query>
///     DSL:

#pragma once

#include "flowrag/catalog.hpp"
#include "flowrag/retrieval.hpp"
#include "flowrag/sample.hpp"

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowrag {

class GroundingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kDefaultInstructions =
    "Translate the user query into a flow written in the workflow DSL. "
    "Use only the functions and parameters listed in the function definitions. "
    "Answer with the DSL program only.";

inline constexpr std::string_view kFewShotSeparator = "---";

struct GroundingConfig {
    std::size_t few_shot_count = 5;
    bool include_fd = true;
    bool include_sfd = false;
    std::size_t sfd_count = 5;
    std::size_t token_budget = 16000;
    std::string system_instructions = std::string(kDefaultInstructions);

    void validate() const
    {
        if (token_budget == 0)
            throw GroundingError("token_budget must be positive");
    }
};

struct FewShotBlock {
    std::string prompt;
    std::string flow_text;

    friend bool operator==(const FewShotBlock&, const FewShotBlock&) = default;
};

struct Metaprompt {
    std::string system_instructions;
    std::vector<std::string> function_definition_blocks;
    std::vector<FewShotBlock> few_shot_blocks;
    std::string user_query;
    std::string rendered;
    std::size_t token_estimate = 0;
    std::size_t dropped_sfds = 0;
    std::size_t dropped_few_shots = 0;
};

using TokenEstimator = std::function<std::size_t(std::string_view)>;

/// ceil(bytes / 4).
inline std::size_t estimate_tokens(std::string_view text) noexcept
{
    return (text.size() + 3) / 4;
}

/// Text with {instructions}, {definitions}, {few_shots} and {query} slots.
class PromptTemplate {
public:
    PromptTemplate() = default;

    explicit PromptTemplate(std::string text) : text_(std::move(text))
    {
        if (text_.find("{query}") == std::string::npos)
            throw GroundingError("prompt template has no {query} slot");
    }

    static PromptTemplate load(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw GroundingError("cannot open prompt template " + path.string());
        return PromptTemplate(std::string(std::istreambuf_iterator<char>(in), {}));
    }

    bool is_default() const noexcept { return text_.empty(); }
    const std::string& text() const noexcept { return text_; }

    /// Single left-to-right pass; slot values are never rescanned and unknown
    /// braces are copied verbatim.
    std::string render(std::string_view instructions, std::string_view definitions, std::string_view few_shots,
                       std::string_view query) const
    {
        if (is_default()) {
            std::string out;
            for (std::string_view section : {instructions, definitions, few_shots, query}) {
                if (section.empty())
                    continue;
                if (!out.empty())
                    out += "\n\n";
                out += section;
            }
            return out;
        }
        std::string out;
        std::size_t pos = 0;
        while (pos < text_.size()) {
            const auto open = text_.find('{', pos);
            if (open == std::string::npos) {
                out.append(text_, pos);
                break;
            }
            out.append(text_, pos, open - pos);
            const auto close = text_.find('}', open);
            const std::string_view slot = close == std::string::npos
                                              ? std::string_view{}
                                              : std::string_view(text_).substr(open + 1, close - open - 1);
            if (slot == "instructions")
                out += instructions;
            else if (slot == "definitions")
                out += definitions;
            else if (slot == "few_shots")
                out += few_shots;
            else if (slot == "query")
                out += query;
            else {
                out += '{';
                pos = open + 1;
                continue;
            }
            pos = close + 1;
        }
        return out;
    }

private:
    std::string text_;
};

struct RegularFds {
    std::vector<FunctionDefinition> definitions;
    std::vector<std::string> missing; // qualified names absent from the catalog
};

/// Definitions for every function called in the few-shot flows, deduplicated in
/// first-appearance order. Throws ParseError when a few-shot flow does not parse.
inline RegularFds collect_regular_fds(std::span<const Sample> few_shots, const ApiCatalog& catalog)
{
    RegularFds out;
    std::set<std::string, std::less<>> seen;
    for (const auto& shot : few_shots) {
        for (auto& name : extract_api_sequence(shot.parsed_flow())) {
            if (!seen.insert(name).second)
                continue;
            if (const auto* def = catalog.find(name))
                out.definitions.push_back(*def);
            else
                out.missing.push_back(std::move(name));
        }
    }
    return out;
}

/// Text embedded for one definition in the SFD index.
inline std::string sfd_text(const FunctionDefinition& def)
{
    std::string text = def.display_name;
    auto append = [&](std::string_view part) {
        if (part.empty())
            return;
        if (!text.empty())
            text += '\n';
        text += part;
    };
    append(def.description);
    for (const auto& p : def.parameters)
        append(p.summary);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        text = def.function_name;
    return text;
}

/// One entry per catalog definition, keyed by qualified name in catalog order.
inline SampleIndex build_sfd_index(const ApiCatalog& catalog, const Embedder& embedder)
{
    if (catalog.empty())
        throw GroundingError("cannot build a definition index from an empty catalog");
    std::vector<std::string> texts;
    std::vector<std::string> ids;
    for (const auto& [name, def] : catalog.definitions()) {
        ids.push_back(name);
        texts.push_back(sfd_text(def));
    }
    const auto vectors = embedder.embed_batch(texts);
    if (vectors.size() != texts.size())
        throw RetrievalError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                             std::to_string(texts.size()) + " texts");
    SampleIndex index(embedder.dimension(), embedder.name());
    for (std::size_t i = 0; i < ids.size(); ++i)
        index.add(ids[i], vectors[i]);
    return index;
}

/// Top-n definitions for the query. Ids no longer in the catalog are skipped.
inline std::vector<FunctionDefinition> retrieve_sfds(const SampleIndex& index, const ApiCatalog& catalog,
                                                     std::string_view query, std::size_t n, const Embedder& embedder)
{
    std::vector<FunctionDefinition> out;
    if (n == 0)
        return out;
    for (const auto& hit : index.search(embedder.embed(query), n))
        if (const auto* def = catalog.find(hit.id))
            out.push_back(*def);
    return out;
}

namespace detail {

inline std::string render_few_shot(const FewShotBlock& b)
{
    std::string flow = b.flow_text;
    while (!flow.empty() && (flow.back() == '\n' || flow.back() == '\r'))
        flow.pop_back();
    return "Query: " + b.prompt + "\nDSL:\n" + flow;
}

inline std::set<std::string, std::less<>> called_functions(std::span<const Sample> shots)
{
    std::set<std::string, std::less<>> names;
    for (const auto& s : shots)
        for (auto& name : extract_api_sequence(s.parsed_flow()))
            names.insert(std::move(name));
    return names;
}

} // namespace detail

/// Builds the metaprompt. Inputs are ranked best first; the config caps how
/// many few-shots and SFDs are used and which definition kinds appear.
/// Regular FDs are kept only for functions called by retained few-shots.
/// Over budget, the lowest-ranked SFD is dropped first, then the
/// lowest-ranked few-shot; instructions and query are never dropped.
inline Metaprompt assemble_metaprompt(std::string_view query, std::span<const Sample> few_shots,
                                      std::span<const FunctionDefinition> fds,
                                      std::span<const FunctionDefinition> sfds, const GroundingConfig& config,
                                      const PromptTemplate& prompt_template = {},
                                      const TokenEstimator& estimator = estimate_tokens)
{
    config.validate();
    std::size_t shot_count = std::min(few_shots.size(), config.few_shot_count);
    std::size_t sfd_count = config.include_sfd ? std::min(sfds.size(), config.sfd_count) : 0;

    Metaprompt mp;
    mp.system_instructions = config.system_instructions;
    mp.user_query = std::string(query);
    const std::string query_section = "Query: " + mp.user_query + "\nDSL:\n";

    for (;;) {
        const auto shots = few_shots.first(shot_count);
        mp.function_definition_blocks.clear();
        mp.few_shot_blocks.clear();

        std::set<std::string, std::less<>> included;
        if (config.include_fd) {
            const auto called = detail::called_functions(shots);
            for (const auto& def : fds)
                if (called.count(def.function_name) && included.insert(def.function_name).second)
                    mp.function_definition_blocks.push_back(render_function_definition(def));
        }
        for (const auto& def : sfds.first(sfd_count))
            if (included.insert(def.function_name).second)
                mp.function_definition_blocks.push_back(render_function_definition(def));

        std::string definitions;
        for (const auto& block : mp.function_definition_blocks)
            definitions += (definitions.empty() ? "Function definitions:\n" : "\n\n") + block;

        std::string examples;
        for (const auto& shot : shots) {
            mp.few_shot_blocks.push_back({shot.prompt, shot.flow_text});
            if (examples.empty())
                examples = "Examples:\n";
            else
                examples += "\n" + std::string(kFewShotSeparator) + "\n";
            examples += detail::render_few_shot(mp.few_shot_blocks.back());
        }

        mp.rendered = prompt_template.render(mp.system_instructions, definitions, examples, query_section);
        mp.token_estimate = estimator(mp.rendered);
        if (mp.token_estimate <= config.token_budget)
            break;
        if (sfd_count > 0) {
            --sfd_count;
            ++mp.dropped_sfds;
        } else if (shot_count > 0) {
            --shot_count;
            ++mp.dropped_few_shots;
        } else {
            throw GroundingError("token budget " + std::to_string(config.token_budget) +
                                 " cannot hold the instructions and query (" + std::to_string(mp.token_estimate) +
                                 " tokens)");
        }
    }
    return mp;
}

} // namespace flowrag
