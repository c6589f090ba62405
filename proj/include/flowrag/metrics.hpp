/// @file metrics.hpp
/// @brief Flow similarity, hallucination rates and baseline deltas.
///
/// Per-sample scoring reduces each flow to its API-call sequence. Similarity
/// is the longest common subsequence length over the longer sequence length.
/// Unparsed flows and flows calling unknown functions score 0 but stay in the
/// average; made-up parameter keys are flagged without changing similarity.
///
/// Rates over a run:
///   - %unparsed        = unparsed / total * 100
///   - %made-up APIs    = flows with an unknown function / parsed * 100
///   - %made-up params  = flows with an unknown key / parsed * 100

#pragma once

#include "flowrag/catalog.hpp"
#include "flowrag/dsl.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowrag {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Classic O(|a||b|) dynamic program, keeping one row.
inline std::size_t lcss_length(std::span<const std::string> a, std::span<const std::string> b)
{
    if (a.empty() || b.empty())
        return 0;
    std::vector<std::size_t> row(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = 0; // row[j-1] from the previous i
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(up, row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

/// LCSS over the longer sequence. Two empty sequences score 1, one empty 0.
inline double sequence_similarity(std::span<const std::string> a, std::span<const std::string> b)
{
    if (a.empty() && b.empty())
        return 1.0;
    const auto longest = std::max(a.size(), b.size());
    return static_cast<double>(lcss_length(a, b)) / static_cast<double>(longest);
}

inline double flow_similarity(const Flow& prediction, const Flow& truth)
{
    const auto p = extract_api_sequence(prediction);
    const auto t = extract_api_sequence(truth);
    return sequence_similarity(p, t);
}

/// Jaccard index over the sets of called function names; 1 when both empty.
inline double jaccard_program_similarity(const Flow& a, const Flow& b)
{
    const auto seq_a = extract_api_sequence(a);
    const auto seq_b = extract_api_sequence(b);
    const std::set<std::string> set_a(seq_a.begin(), seq_a.end());
    const std::set<std::string> set_b(seq_b.begin(), seq_b.end());
    if (set_a.empty() && set_b.empty())
        return 1.0;
    std::size_t common = 0;
    for (const auto& name : set_a)
        common += set_b.count(name);
    const std::size_t united = set_a.size() + set_b.size() - common;
    return static_cast<double>(common) / static_cast<double>(united);
}

struct EvaluationOutcome {
    std::string sample_id;
    bool parsed = false;
    bool has_made_up_function = false;
    bool has_made_up_parameter = false;
    double similarity = 0.0;

    friend bool operator==(const EvaluationOutcome&, const EvaluationOutcome&) = default;
};

/// Scores one prediction against its gold flow. With a null catalog the
/// hallucination checks are skipped.
inline EvaluationOutcome score_sample(std::string sample_id, std::string_view prediction_text,
                                      const Flow& truth, const ApiCatalog* catalog)
{
    EvaluationOutcome outcome;
    outcome.sample_id = std::move(sample_id);
    auto parsed = try_parse_flow(prediction_text);
    const Flow* prediction = std::get_if<Flow>(&parsed);
    if (!prediction)
        return outcome;
    outcome.parsed = true;
    if (catalog) {
        const ValidationResult validation = validate_flow(*prediction, *catalog);
        outcome.has_made_up_function = !validation.made_up_functions.empty();
        outcome.has_made_up_parameter = !validation.made_up_parameters.empty();
    }
    outcome.similarity = outcome.has_made_up_function ? 0.0 : flow_similarity(*prediction, truth);
    return outcome;
}

inline EvaluationOutcome score_sample(std::string sample_id, std::string_view prediction_text,
                                      const Flow& truth, const ApiCatalog& catalog)
{
    return score_sample(std::move(sample_id), prediction_text, truth, &catalog);
}

struct MetricCounts {
    std::size_t total = 0;
    std::size_t parsed = 0;
    std::size_t hallucinated_fn = 0;
    std::size_t hallucinated_param = 0;
    std::size_t unparsed = 0;

    friend bool operator==(const MetricCounts&, const MetricCounts&) = default;
};

struct MetricsReport {
    double average_similarity = 0.0;
    double unparsed_pct = 0.0;
    double made_up_api_pct = 0.0;
    double made_up_param_pct = 0.0;
    MetricCounts counts;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Throws MetricsError on an empty outcome list. The result does not depend
/// on outcome order: similarities are summed in sorted order.
inline MetricsReport aggregate(std::span<const EvaluationOutcome> outcomes)
{
    if (outcomes.empty())
        throw MetricsError("cannot aggregate an empty outcome list");

    MetricsReport report;
    std::vector<double> similarities;
    similarities.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        ++report.counts.total;
        if (o.parsed) {
            ++report.counts.parsed;
            report.counts.hallucinated_fn += o.has_made_up_function ? 1 : 0;
            report.counts.hallucinated_param += o.has_made_up_parameter ? 1 : 0;
        } else {
            ++report.counts.unparsed;
        }
        similarities.push_back(o.parsed ? o.similarity : 0.0);
    }
    std::sort(similarities.begin(), similarities.end());
    double sum = 0.0;
    for (const double s : similarities)
        sum += s;

    const auto total = static_cast<double>(report.counts.total);
    const auto parsed = static_cast<double>(report.counts.parsed);
    report.average_similarity = sum / total;
    report.unparsed_pct = static_cast<double>(report.counts.unparsed) / total * 100.0;
    // No parsed flows: nothing could hallucinate, rates are reported as 0.
    if (report.counts.parsed > 0) {
        report.made_up_api_pct = 100.0 * static_cast<double>(report.counts.hallucinated_fn) / parsed;
        report.made_up_param_pct = 100.0 * static_cast<double>(report.counts.hallucinated_param) / parsed;
    }
    return report;
}

struct DeltaReport {
    std::string baseline_name;
    std::string candidate_name;
    double average_similarity = 0.0;
    double unparsed_pct = 0.0;
    double made_up_api_pct = 0.0;
    double made_up_param_pct = 0.0;

    friend bool operator==(const DeltaReport&, const DeltaReport&) = default;
};

/// candidate minus baseline. Both reports must cover the same number of samples.
inline DeltaReport delta_report(const MetricsReport& baseline, const MetricsReport& candidate,
                                std::string baseline_name = "baseline",
                                std::string candidate_name = "candidate")
{
    if (baseline.counts.total != candidate.counts.total)
        throw MetricsError("cannot compare runs over different sample counts (" +
                           std::to_string(baseline.counts.total) + " vs " +
                           std::to_string(candidate.counts.total) + ")");
    DeltaReport d;
    d.baseline_name = std::move(baseline_name);
    d.candidate_name = std::move(candidate_name);
    d.average_similarity = candidate.average_similarity - baseline.average_similarity;
    d.unparsed_pct = candidate.unparsed_pct - baseline.unparsed_pct;
    d.made_up_api_pct = candidate.made_up_api_pct - baseline.made_up_api_pct;
    d.made_up_param_pct = candidate.made_up_param_pct - baseline.made_up_param_pct;
    return d;
}

//===----------------------------------------------------------------------===//
// Serialization
//===----------------------------------------------------------------------===//

inline nlohmann::ordered_json to_json(const EvaluationOutcome& o)
{
    return {{"id", o.sample_id},
            {"parsed", o.parsed},
            {"made_up_function", o.has_made_up_function},
            {"made_up_parameter", o.has_made_up_parameter},
            {"similarity", o.similarity}};
}

inline EvaluationOutcome outcome_from_json(const nlohmann::json& j)
{
    return {j.at("id").get<std::string>(), j.at("parsed").get<bool>(), j.at("made_up_function").get<bool>(),
            j.at("made_up_parameter").get<bool>(), j.at("similarity").get<double>()};
}

inline nlohmann::ordered_json to_json(const MetricsReport& r)
{
    return {{"average_similarity", r.average_similarity},
            {"unparsed_pct", r.unparsed_pct},
            {"made_up_api_pct", r.made_up_api_pct},
            {"made_up_param_pct", r.made_up_param_pct},
            {"counts",
             {{"total", r.counts.total},
              {"parsed", r.counts.parsed},
              {"hallucinated_fn", r.counts.hallucinated_fn},
              {"hallucinated_param", r.counts.hallucinated_param},
              {"unparsed", r.counts.unparsed}}}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j)
{
    MetricsReport r;
    r.average_similarity = j.at("average_similarity").get<double>();
    r.unparsed_pct = j.at("unparsed_pct").get<double>();
    r.made_up_api_pct = j.at("made_up_api_pct").get<double>();
    r.made_up_param_pct = j.at("made_up_param_pct").get<double>();
    const auto& c = j.at("counts");
    r.counts = {c.at("total").get<std::size_t>(), c.at("parsed").get<std::size_t>(),
                c.at("hallucinated_fn").get<std::size_t>(), c.at("hallucinated_param").get<std::size_t>(),
                c.at("unparsed").get<std::size_t>()};
    return r;
}

inline nlohmann::ordered_json to_json(const DeltaReport& d)
{
    return {{"baseline", d.baseline_name},
            {"model", d.candidate_name},
            {"average_similarity", d.average_similarity},
            {"unparsed_pct", d.unparsed_pct},
            {"made_up_api_pct", d.made_up_api_pct},
            {"made_up_param_pct", d.made_up_param_pct}};
}

/// Two decimals; rounding to zero prints "0.00" without a sign.
inline std::string format_value(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    return s == "-0.00" ? "0.00" : s;
}

/// Two decimals with an explicit sign on non-zero values: "+0.02", "-6.29", "0.00".
inline std::string format_delta(double v)
{
    std::string s = format_value(v);
    if (s != "0.00" && s.front() != '-')
        s.insert(s.begin(), '+');
    return s;
}

inline constexpr const char* kTableColumns[] = {"Avg. Similarity", "%Unparsed flows", "%Made-up API names",
                                                "%Made-up API parameters"};

namespace detail {

inline std::string render_rows(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                line += row[c] + std::string(widths[c] - row[c].size(), ' ');
            } else {
                line += "  " + std::string(widths[c] - row[c].size(), ' ') + row[c];
            }
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out += line + '\n';
    }
    return out;
}

} // namespace detail

struct NamedReport {
    std::string name;
    MetricsReport report;
};

/// Aligned absolute-value table, one row per run.
inline std::string render_metrics_table(std::span<const NamedReport> rows)
{
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Model", kTableColumns[0], kTableColumns[1], kTableColumns[2], kTableColumns[3]});
    for (const auto& row : rows) {
        cells.push_back({row.name, format_value(row.report.average_similarity),
                         format_value(row.report.unparsed_pct), format_value(row.report.made_up_api_pct),
                         format_value(row.report.made_up_param_pct)});
    }
    return detail::render_rows(cells);
}

/// Aligned signed-delta table; positive similarity and negative failure
/// rates are improvements.
inline std::string render_delta_table(std::span<const DeltaReport> rows)
{
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Model", kTableColumns[0], kTableColumns[1], kTableColumns[2], kTableColumns[3]});
    for (const auto& d : rows) {
        cells.push_back({d.candidate_name, format_delta(d.average_similarity), format_delta(d.unparsed_pct),
                         format_delta(d.made_up_api_pct), format_delta(d.made_up_param_pct)});
    }
    return detail::render_rows(cells);
}

} // namespace flowrag
