/// @file catalog.hpp
/// @brief API metadata catalog and hallucination checks for parsed flows.
///
/// The catalog document is a JSON object keyed by qualified function name:
///
/// ```json
/// "shared_outlook.SendEmailV2": {
///   "FunctionName": "shared_outlook.SendEmailV2",
///   "Description": "This operation sends an email message.",
///   "IsInTrainingSet": false,
///   "DisplayName": "Send an email (V2)",
///   "ParametersInfo": [{"Key": "emailMessage/To", "Type": "String", "Summary": "To",
///                       "Format": "email", "Description": "..."}],
///   "ResponseSchema": [],
///   "IsTrigger": false
/// }
/// ```

#pragma once

#include "flowrag/dsl.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flowrag {

class CatalogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParameterInfo {
    std::string key; // may contain "/" path segments
    std::string type_name;
    std::string summary;
    std::optional<std::string> format;
    std::string description;
};

struct FunctionDefinition {
    std::string function_name;
    std::string description;
    std::string display_name;
    bool is_in_training_set = false;
    bool is_trigger = false;
    std::vector<ParameterInfo> parameters;
    nlohmann::json response_schema = nlohmann::json::array(); // stored, never interpreted

    /// True if a DSL argument key refers to one of this function's parameters:
    /// either the full catalog key or its last "/" segment.
    bool accepts_key(std::string_view key) const
    {
        for (const auto& p : parameters) {
            if (p.key == key)
                return true;
            const auto slash = p.key.rfind('/');
            if (slash != std::string::npos && std::string_view(p.key).substr(slash + 1) == key)
                return true;
        }
        return false;
    }
};

/// Splits `ns.function`; returns nullopt unless there is exactly one dot with
/// non-empty text on both sides.
inline std::optional<std::pair<std::string, std::string>> split_qualified_name(std::string_view name)
{
    const auto dot = name.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == name.size() ||
        name.find('.', dot + 1) != std::string_view::npos)
        return std::nullopt;
    return std::make_pair(std::string(name.substr(0, dot)), std::string(name.substr(dot + 1)));
}

class ApiCatalog {
public:
    ApiCatalog() = default;

    /// Throws CatalogError on a malformed name or duplicate function.
    void add(FunctionDefinition def)
    {
        if (!split_qualified_name(def.function_name))
            throw CatalogError("invalid function name '" + def.function_name +
                               "': expected namespace.function");
        std::set<std::string_view> keys;
        for (const auto& p : def.parameters) {
            if (p.key.empty())
                throw CatalogError("entry '" + def.function_name + "': empty parameter key");
            if (!keys.insert(p.key).second)
                throw CatalogError("entry '" + def.function_name + "': duplicate parameter key '" +
                                   p.key + "'");
        }
        auto name = def.function_name;
        if (!definitions_.emplace(name, std::move(def)).second)
            throw CatalogError("duplicate function name '" + name + "'");
    }

    const FunctionDefinition* find(std::string_view name) const
    {
        auto it = definitions_.find(name);
        return it == definitions_.end() ? nullptr : &it->second;
    }

    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::size_t size() const noexcept { return definitions_.size(); }
    bool empty() const noexcept { return definitions_.empty(); }

    /// Sorted by qualified name.
    const std::map<std::string, FunctionDefinition, std::less<>>& definitions() const noexcept { return definitions_; }

private:
    std::map<std::string, FunctionDefinition, std::less<>> definitions_;
};

namespace detail {

inline std::string optional_string(const nlohmann::json& obj, const char* field, const std::string& entry)
{
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null())
        return {};
    if (!it->is_string())
        throw CatalogError("entry '" + entry + "': field " + field + " must be a string");
    return it->get<std::string>();
}

inline bool optional_bool(const nlohmann::json& obj, const char* field, const std::string& entry)
{
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null())
        return false;
    if (!it->is_boolean())
        throw CatalogError("entry '" + entry + "': field " + field + " must be a boolean");
    return it->get<bool>();
}

inline FunctionDefinition parse_definition(const std::string& entry, const nlohmann::json& value)
{
    if (!value.is_object())
        throw CatalogError("entry '" + entry + "': expected an object");

    FunctionDefinition def;
    auto name = value.find("FunctionName");
    if (name == value.end() || !name->is_string())
        throw CatalogError("entry '" + entry + "': missing required field FunctionName");
    def.function_name = name->get<std::string>();

    auto params = value.find("ParametersInfo");
    if (params == value.end() || !params->is_array())
        throw CatalogError("entry '" + entry + "': missing required field ParametersInfo");

    def.description = optional_string(value, "Description", entry);
    def.display_name = optional_string(value, "DisplayName", entry);
    def.is_in_training_set = optional_bool(value, "IsInTrainingSet", entry);
    def.is_trigger = optional_bool(value, "IsTrigger", entry);
    if (auto rs = value.find("ResponseSchema"); rs != value.end())
        def.response_schema = *rs;

    for (const auto& p : *params) {
        if (!p.is_object())
            throw CatalogError("entry '" + entry + "': ParametersInfo items must be objects");
        auto key = p.find("Key");
        if (key == p.end() || !key->is_string() || key->get_ref<const std::string&>().empty())
            throw CatalogError("entry '" + entry + "': parameter without a non-empty Key");
        ParameterInfo info;
        info.key = key->get<std::string>();
        info.type_name = optional_string(p, "Type", entry);
        info.summary = optional_string(p, "Summary", entry);
        info.description = optional_string(p, "Description", entry);
        if (auto fmt = p.find("Format"); fmt != p.end() && !fmt->is_null()) {
            if (!fmt->is_string())
                throw CatalogError("entry '" + entry + "': field Format must be a string");
            info.format = fmt->get<std::string>();
        }
        def.parameters.push_back(std::move(info));
    }
    return def;
}

} // namespace detail

/// Loads a catalog document. Unknown fields are ignored; duplicate names and
/// schema violations throw CatalogError naming the entry.
inline ApiCatalog load_catalog(std::string_view document)
{
    std::set<std::string> seen_keys;
    auto reject_duplicate_keys = [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
        if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
            const auto& key = parsed.get_ref<const std::string&>();
            if (!seen_keys.insert(key).second)
                throw CatalogError("duplicate function name '" + key + "'");
        }
        return true;
    };

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document.begin(), document.end(), reject_duplicate_keys);
    } catch (const nlohmann::json::parse_error& e) {
        throw CatalogError(std::string("catalog is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw CatalogError("catalog must be a JSON object keyed by function name");

    ApiCatalog catalog;
    for (const auto& [entry, value] : doc.items())
        catalog.add(detail::parse_definition(entry, value));
    return catalog;
}

inline ApiCatalog load_catalog_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CatalogError("cannot open catalog file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_catalog(buffer.str());
}

struct MadeUpParameter {
    std::string function_name;
    std::string key;

    friend bool operator==(const MadeUpParameter&, const MadeUpParameter&) = default;
};

struct ValidationResult {
    std::vector<std::string> made_up_functions;        // distinct, first-appearance order
    std::vector<MadeUpParameter> made_up_parameters;   // only for cataloged functions

    bool clean() const noexcept { return made_up_functions.empty() && made_up_parameters.empty(); }

    friend bool operator==(const ValidationResult&, const ValidationResult&) = default;
};

/// Checks every call in the flow against the catalog. Only top-level argument
/// keys are examined; a key on an unknown function is not reported as a
/// made-up parameter.
inline ValidationResult validate_flow(const Flow& flow, const ApiCatalog& catalog)
{
    ValidationResult result;
    std::set<std::string> seen_functions;
    std::set<std::pair<std::string, std::string>> seen_params;
    for (const auto& usage : extract_parameter_usages(flow)) {
        const FunctionDefinition* def = catalog.find(usage.qualified_name);
        if (!def) {
            if (seen_functions.insert(usage.qualified_name).second)
                result.made_up_functions.push_back(usage.qualified_name);
            continue;
        }
        for (const auto& key : usage.keys) {
            if (!def->accepts_key(key) && seen_params.emplace(usage.qualified_name, key).second)
                result.made_up_parameters.push_back({usage.qualified_name, key});
        }
    }
    return result;
}

namespace detail {

inline std::string single_line(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (const char c : text) {
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

} // namespace detail

/// Text block inserted into metaprompts:
///
///     shared_outlook.SendEmailV2
///     This operation sends an email message.
///     emailMessage/To (String): Specify email addresses ...
inline std::string render_function_definition(const FunctionDefinition& def)
{
    std::string out = def.function_name;
    out += '\n';
    out += detail::single_line(def.description);
    for (const auto& p : def.parameters) {
        out += '\n';
        out += p.key;
        out += " (";
        out += p.type_name.empty() ? "any" : p.type_name;
        out += "): ";
        out += detail::single_line(p.description.empty() ? p.summary : p.description);
    }
    return out;
}

} // namespace flowrag
