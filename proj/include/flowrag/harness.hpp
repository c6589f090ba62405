/// @file harness.hpp
/// @brief Datasets, in-domain/out-of-domain splits, experiment runs over
/// grounding configurations, and report emission.

#pragma once

#include "flowrag/catalog.hpp"
#include "flowrag/generation.hpp"
#include "flowrag/grounding.hpp"
#include "flowrag/metrics.hpp"
#include "flowrag/retrieval.hpp"
#include "flowrag/sample.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace flowrag {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HarnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

//===----------------------------------------------------------------------===//
// Datasets
//===----------------------------------------------------------------------===//

/// One JSON object per line with string fields "id", "prompt" and "flow";
/// blank lines are skipped. Every gold flow must parse.
inline std::vector<Sample> parse_dataset(std::istream& in, std::string_view source = "dataset")
{
    std::vector<Sample> samples;
    std::set<std::string, std::less<>> ids;
    std::vector<std::string> unparseable;
    std::string line;
    std::size_t line_no = 0;
    const std::string where(source);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(where + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }
        for (const char* field : {"id", "prompt", "flow"}) {
            if (!j.is_object() || !j.contains(field) || !j[field].is_string())
                throw DatasetError(where + ":" + std::to_string(line_no) + ": record needs string field '" + field +
                                   "'");
        }
        Sample s{j["id"].get<std::string>(), j["prompt"].get<std::string>(), j["flow"].get<std::string>(),
                 std::nullopt};
        if (!ids.insert(s.id).second)
            throw DatasetError(where + ":" + std::to_string(line_no) + ": duplicate id '" + s.id + "'");
        auto parsed = try_parse_flow(s.flow_text);
        if (auto* flow = std::get_if<Flow>(&parsed))
            s.flow = std::move(*flow);
        else
            unparseable.push_back(s.id);
        samples.push_back(std::move(s));
    }
    if (!unparseable.empty()) {
        std::string list;
        for (const auto& id : unparseable)
            list += (list.empty() ? "" : ", ") + id;
        throw DatasetError(where + ": " + std::to_string(unparseable.size()) + " flow(s) failed to parse: " + list);
    }
    return samples;
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DatasetError("cannot open dataset " + path.string());
    return parse_dataset(in, path.string());
}

inline void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DatasetError("cannot write dataset " + path.string());
    for (const auto& s : samples)
        out << nlohmann::ordered_json{{"id", s.id}, {"prompt", s.prompt}, {"flow", s.flow_text}}.dump() << '\n';
}

//===----------------------------------------------------------------------===//
// Splits
//===----------------------------------------------------------------------===//

struct SplitConfig {
    std::vector<std::string> held_out_apis;
    std::optional<std::size_t> in_domain_test_count; // wins over the fraction
    double in_domain_test_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> test_in_domain;
    std::vector<Sample> test_out_of_domain;
    std::vector<std::string> held_out_apis;
};

/// Samples calling any held-out API form the out-of-domain test set. The
/// in-domain test set is drawn from the rest, stratified by each flow's first
/// API with largest-remainder quotas and a seeded hash order inside each
/// stratum. Everything else is train. All lists keep input order.
inline DatasetSplit make_ood_split(std::span<const Sample> samples, const SplitConfig& config)
{
    DatasetSplit split;
    split.held_out_apis = config.held_out_apis;
    const std::set<std::string, std::less<>> held(config.held_out_apis.begin(), config.held_out_apis.end());

    std::vector<std::size_t> remainder;
    std::vector<std::string> first_api(samples.size());
    std::vector<bool> is_ood(samples.size(), false);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto calls = extract_api_sequence(samples[i].parsed_flow());
        first_api[i] = calls.empty() ? std::string() : calls.front();
        is_ood[i] = std::any_of(calls.begin(), calls.end(), [&](const std::string& c) { return held.count(c) > 0; });
        if (!is_ood[i])
            remainder.push_back(i);
    }

    std::size_t want = config.in_domain_test_count.value_or(static_cast<std::size_t>(
        std::llround(std::clamp(config.in_domain_test_fraction, 0.0, 1.0) * static_cast<double>(remainder.size()))));
    want = std::min(want, remainder.size());

    std::map<std::string, std::vector<std::size_t>> strata;
    for (const auto i : remainder)
        strata[first_api[i]].push_back(i);

    struct Quota {
        std::string key;
        std::size_t base;
        std::size_t leftover; // numerator of the fractional part, over remainder.size()
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [key, members] : strata) {
        const std::size_t scaled = want * members.size();
        quotas.push_back({key, scaled / remainder.size(), scaled % remainder.size()});
        assigned += quotas.back().base;
    }
    std::vector<std::size_t> order(quotas.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].leftover > quotas[b].leftover; });
    for (std::size_t n = 0; assigned < want && n < order.size(); ++n, ++assigned)
        ++quotas[order[n]].base;

    const std::string seed = std::to_string(config.seed) + ":";
    std::vector<bool> is_test(samples.size(), false);
    for (const auto& q : quotas) {
        auto members = strata[q.key];
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            const auto ha = fnv1a64(seed + samples[a].id);
            const auto hb = fnv1a64(seed + samples[b].id);
            return ha != hb ? ha < hb : samples[a].id < samples[b].id;
        });
        for (std::size_t n = 0; n < q.base && n < members.size(); ++n)
            is_test[members[n]] = true;
    }

    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (is_ood[i])
            split.test_out_of_domain.push_back(samples[i]);
        else if (is_test[i])
            split.test_in_domain.push_back(samples[i]);
        else
            split.train.push_back(samples[i]);
    }
    return split;
}

//===----------------------------------------------------------------------===//
// Experiments
//===----------------------------------------------------------------------===//

struct ExperimentSpec {
    std::string name;
    GroundingConfig grounding;
    std::string selection_model = "tst"; // key into the context's embedders
    std::optional<std::filesystem::path> test_path; // overrides the run's test set
    std::optional<std::string> baseline_name;       // overrides the run's baseline
};

/// The 16 configurations: {Pre-trained, TST} x {5, 20} shots x FD x SFD.
inline std::vector<ExperimentSpec> ablation_grid(const GroundingConfig& base = {})
{
    std::vector<ExperimentSpec> grid;
    for (const char* model : {"pretrained", "tst"}) {
        for (std::size_t shots : {std::size_t{5}, std::size_t{20}}) {
            for (bool fd : {false, true}) {
                for (bool sfd : {false, true}) {
                    ExperimentSpec spec;
                    spec.selection_model = model;
                    spec.grounding = base;
                    spec.grounding.few_shot_count = shots;
                    spec.grounding.include_fd = fd;
                    spec.grounding.include_sfd = sfd;
                    spec.name = std::string(model == std::string_view("tst") ? "TST" : "Pre-trained") + " " +
                                std::to_string(shots) + "-shot" + (fd ? " + FD" : "") + (sfd ? " + SFD" : "") +
                                (!fd && !sfd ? " w/o FD" : "");
                    grid.push_back(std::move(spec));
                }
            }
        }
    }
    return grid;
}

struct GenerationSettings {
    int max_output_tokens = 1024;
    double temperature = 0.0;
    std::vector<std::string> stop_sequences;
    std::string model_name;
};

struct RunOptions {
    std::size_t concurrency = 8;
    bool store_full_prompts = false;
    GenerationSettings generation;
};

/// Catalog, few-shot pool, embedders and the indexes built from them.
/// Indexes are built by prepare() and only read afterwards, so one context
/// can serve concurrent prompt assembly.
class ExperimentContext {
public:
    ExperimentContext(ApiCatalog catalog, std::vector<Sample> train,
                      std::map<std::string, std::shared_ptr<const Embedder>> embedders, PromptTemplate prompt_template = {})
        : catalog_(std::move(catalog)), train_(std::move(train)), embedders_(std::move(embedders)),
          template_(std::move(prompt_template))
    {
        for (std::size_t i = 0; i < train_.size(); ++i)
            if (!by_id_.emplace(train_[i].id, i).second)
                throw DatasetError("duplicate training id '" + train_[i].id + "'");
    }

    const ApiCatalog& catalog() const noexcept { return catalog_; }
    const std::vector<Sample>& train() const noexcept { return train_; }

    const Embedder& embedder(const std::string& name) const
    {
        auto it = embedders_.find(name);
        if (it == embedders_.end() || !it->second)
            throw HarnessError("unknown selection model '" + name + "'");
        return *it->second;
    }

    /// Builds the indexes a spec needs. Not thread-safe; call before running.
    void prepare(const ExperimentSpec& spec)
    {
        const auto& emb = embedder(spec.selection_model);
        if (!few_shot_indexes_.count(spec.selection_model))
            few_shot_indexes_.emplace(spec.selection_model, build_index(train_, emb));
        if (spec.grounding.include_sfd && !sfd_indexes_.count(spec.selection_model))
            sfd_indexes_.emplace(spec.selection_model, build_sfd_index(catalog_, emb));
    }

    /// Few-shots for a query, best first; a training sample sharing the
    /// query's id is never its own example.
    std::vector<Sample> select_few_shots(const ExperimentSpec& spec, const Sample& query) const
    {
        const std::size_t k = spec.grounding.few_shot_count;
        std::vector<Sample> shots;
        if (k == 0)
            return shots;
        const auto& index = few_shot_indexes_.at(spec.selection_model);
        for (const auto& hit : retrieve_few_shots(index, query.prompt, k + 1, embedder(spec.selection_model))) {
            if (hit.id == query.id)
                continue;
            shots.push_back(train_[by_id_.at(hit.id)]);
            if (shots.size() == k)
                break;
        }
        return shots;
    }

    /// Optionally reports the ids of the few-shots kept after truncation.
    Metaprompt build_metaprompt(const ExperimentSpec& spec, const Sample& query,
                                std::vector<std::string>* few_shot_ids = nullptr) const
    {
        const auto shots = select_few_shots(spec, query);
        std::vector<FunctionDefinition> fds;
        if (spec.grounding.include_fd)
            fds = collect_regular_fds(shots, catalog_).definitions;
        std::vector<FunctionDefinition> sfds;
        if (spec.grounding.include_sfd)
            sfds = retrieve_sfds(sfd_indexes_.at(spec.selection_model), catalog_, query.prompt,
                                 spec.grounding.sfd_count, embedder(spec.selection_model));
        auto mp = assemble_metaprompt(query.prompt, shots, fds, sfds, spec.grounding, template_);
        if (few_shot_ids) {
            few_shot_ids->clear();
            for (std::size_t i = 0; i < mp.few_shot_blocks.size(); ++i)
                few_shot_ids->push_back(shots[i].id);
        }
        return mp;
    }

private:
    ApiCatalog catalog_;
    std::vector<Sample> train_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::map<std::string, std::shared_ptr<const Embedder>> embedders_;
    PromptTemplate template_;
    std::map<std::string, SampleIndex> few_shot_indexes_;
    std::map<std::string, SampleIndex> sfd_indexes_;
};

struct SampleRecord {
    std::string id;
    std::string prompt_digest; // SHA-256 of the rendered metaprompt
    std::string prompt;        // only when full prompts are stored
    std::vector<std::string> few_shot_ids;
    std::string completion_text;
    FinishReason finish_reason = FinishReason::TransportError;
    std::string error;
    EvaluationOutcome outcome;
    std::int64_t latency_ms = 0;
};

struct RunRecord {
    std::string experiment;
    std::string selection_model;
    GroundingConfig grounding;
    std::optional<std::string> baseline_name;
    std::vector<SampleRecord> samples; // sorted by id
    MetricsReport report;
    std::int64_t wall_ms = 0;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;)
            fn(i);
    };
    if (workers == 1) {
        loop();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(loop);
    for (auto& t : pool)
        t.join();
}

} // namespace detail

/// Scores every test sample under one grounding configuration. A failure in
/// one sample (assembly, transport, refusal) makes only that sample unparsed.
inline RunRecord run_experiment(const ExperimentSpec& spec, ExperimentContext& context, std::span<const Sample> tests,
                                const CompletionClient& client, const RunOptions& options = {})
{
    if (tests.empty())
        throw HarnessError("experiment '" + spec.name + "' has no test samples");
    spec.grounding.validate();
    context.prepare(spec);
    const ExperimentContext& ctx = context;

    const auto start = std::chrono::steady_clock::now();
    std::vector<SampleRecord> records(tests.size());
    detail::parallel_for(tests.size(), options.concurrency, [&](std::size_t i) {
        const Sample& sample = tests[i];
        SampleRecord& rec = records[i];
        rec.id = sample.id;
        std::string dsl;
        try {
            const auto mp = ctx.build_metaprompt(spec, sample, &rec.few_shot_ids);
            rec.prompt_digest = sha256_hex(mp.rendered);
            if (options.store_full_prompts)
                rec.prompt = mp.rendered;

            CompletionRequest request;
            request.prompt = mp.rendered;
            request.max_output_tokens = options.generation.max_output_tokens;
            request.temperature = options.generation.temperature;
            request.stop_sequences = options.generation.stop_sequences;
            request.model_name = options.generation.model_name;
            const auto result = client.complete(request);
            rec.completion_text = result.text;
            rec.finish_reason = result.finish_reason;
            rec.error = result.error;
            rec.latency_ms = result.latency_ms;
            dsl = extract_dsl(result.text);
        } catch (const std::exception& e) {
            rec.error = e.what();
            dsl.clear();
        }
        try {
            rec.outcome = score_sample(sample.id, dsl, sample.parsed_flow(), &ctx.catalog());
        } catch (const std::exception& e) {
            rec.outcome = EvaluationOutcome{sample.id, false, false, false, 0.0};
            rec.error = e.what();
        }
    });

    std::sort(records.begin(), records.end(), [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
    std::vector<EvaluationOutcome> outcomes;
    outcomes.reserve(records.size());
    for (const auto& r : records)
        outcomes.push_back(r.outcome);

    RunRecord run;
    run.experiment = spec.name;
    run.selection_model = spec.selection_model;
    run.grounding = spec.grounding;
    run.baseline_name = spec.baseline_name;
    run.report = aggregate(outcomes);
    run.samples = std::move(records);
    run.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return run;
}

/// Fixture entries answering each test prompt of the spec with its gold flow.
inline MockCompletionClient::Fixture echo_fixture(const ExperimentSpec& spec, ExperimentContext& context,
                                                  std::span<const Sample> tests)
{
    context.prepare(spec);
    MockCompletionClient::Fixture fixture;
    for (const auto& s : tests)
        fixture[sha256_hex(context.build_metaprompt(spec, s).rendered)] = s.flow_text;
    return fixture;
}

//===----------------------------------------------------------------------===//
// Reports
//===----------------------------------------------------------------------===//

inline nlohmann::ordered_json to_json(const GroundingConfig& g)
{
    return {{"few_shot_count", g.few_shot_count}, {"include_fd", g.include_fd}, {"include_sfd", g.include_sfd},
            {"sfd_count", g.sfd_count},           {"token_budget", g.token_budget}};
}

/// Per-sample detail and timing; not part of the byte-stable report.
inline nlohmann::ordered_json to_json(const RunRecord& r)
{
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& s : r.samples) {
        nlohmann::ordered_json j = {{"id", s.id},
                                    {"prompt_digest", s.prompt_digest},
                                    {"few_shot_ids", s.few_shot_ids},
                                    {"completion", s.completion_text},
                                    {"finish_reason", std::string(to_string(s.finish_reason))},
                                    {"outcome", to_json(s.outcome)},
                                    {"latency_ms", s.latency_ms}};
        if (!s.prompt.empty())
            j["prompt"] = s.prompt;
        if (!s.error.empty())
            j["error"] = s.error;
        samples.push_back(std::move(j));
    }
    nlohmann::ordered_json j = {{"experiment", r.experiment},
                                {"selection_model", r.selection_model},
                                {"grounding", to_json(r.grounding)}};
    if (r.baseline_name)
        j["baseline"] = *r.baseline_name;
    j["metrics"] = to_json(r.report);
    j["wall_ms"] = r.wall_ms;
    j["samples"] = std::move(samples);
    return j;
}

inline FinishReason finish_reason_from_string(std::string_view s)
{
    for (auto r : {FinishReason::Completed, FinishReason::Truncated, FinishReason::Refused, FinishReason::TransportError})
        if (to_string(r) == s)
            return r;
    throw HarnessError("unknown finish reason '" + std::string(s) + "'");
}

inline RunRecord run_record_from_json(const nlohmann::json& j)
{
    try {
        RunRecord r;
        r.experiment = j.at("experiment").get<std::string>();
        r.selection_model = j.value("selection_model", "");
        const auto& g = j.at("grounding");
        r.grounding.few_shot_count = g.at("few_shot_count").get<std::size_t>();
        r.grounding.include_fd = g.at("include_fd").get<bool>();
        r.grounding.include_sfd = g.at("include_sfd").get<bool>();
        r.grounding.sfd_count = g.at("sfd_count").get<std::size_t>();
        r.grounding.token_budget = g.at("token_budget").get<std::size_t>();
        if (j.contains("baseline"))
            r.baseline_name = j["baseline"].get<std::string>();
        r.report = metrics_from_json(j.at("metrics"));
        r.wall_ms = j.value("wall_ms", std::int64_t{0});
        for (const auto& s : j.value("samples", nlohmann::json::array())) {
            SampleRecord rec;
            rec.id = s.at("id").get<std::string>();
            rec.prompt_digest = s.value("prompt_digest", "");
            rec.prompt = s.value("prompt", "");
            rec.few_shot_ids = s.value("few_shot_ids", std::vector<std::string>{});
            rec.completion_text = s.value("completion", "");
            rec.finish_reason = finish_reason_from_string(s.at("finish_reason").get<std::string>());
            rec.error = s.value("error", "");
            rec.outcome = outcome_from_json(s.at("outcome"));
            rec.latency_ms = s.value("latency_ms", std::int64_t{0});
            r.samples.push_back(std::move(rec));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(std::string("malformed run record: ") + e.what());
    }
}

struct RenderedReports {
    nlohmann::ordered_json json;
    std::string text;
};

/// Absolute table for every record plus a signed delta table against the
/// baseline (per-record override first, then the default). Baseline rows are
/// not repeated in the delta table.
inline RenderedReports render_reports(std::span<const RunRecord> records,
                                      const std::optional<std::string>& default_baseline)
{
    std::map<std::string, const RunRecord*, std::less<>> by_name;
    for (const auto& r : records)
        if (!by_name.emplace(r.experiment, &r).second)
            throw HarnessError("duplicate experiment name '" + r.experiment + "'");

    std::vector<NamedReport> rows;
    std::vector<DeltaReport> deltas;
    nlohmann::ordered_json experiments = nlohmann::ordered_json::array();
    for (const auto& r : records) {
        rows.push_back({r.experiment, r.report});
        experiments.push_back({{"name", r.experiment},
                               {"selection_model", r.selection_model},
                               {"grounding", to_json(r.grounding)},
                               {"metrics", to_json(r.report)}});
        const auto& baseline = r.baseline_name ? r.baseline_name : default_baseline;
        if (!baseline)
            continue;
        auto it = by_name.find(*baseline);
        if (it == by_name.end())
            throw HarnessError("baseline '" + *baseline + "' is not among the experiments");
        if (it->second == &r)
            continue;
        deltas.push_back(delta_report(it->second->report, r.report, *baseline, r.experiment));
    }

    RenderedReports out;
    out.json = {{"experiments", std::move(experiments)}};
    if (default_baseline)
        out.json["baseline"] = *default_baseline;
    if (!deltas.empty()) {
        nlohmann::ordered_json d = nlohmann::ordered_json::array();
        for (const auto& delta : deltas)
            d.push_back(to_json(delta));
        out.json["deltas"] = std::move(d);
    }

    out.text = "Absolute metrics\n" + render_metrics_table(rows);
    if (!deltas.empty()) {
        // One delta table per baseline, in order of first use.
        std::vector<std::string> baselines;
        for (const auto& d : deltas)
            if (std::find(baselines.begin(), baselines.end(), d.baseline_name) == baselines.end())
                baselines.push_back(d.baseline_name);
        for (const auto& b : baselines) {
            std::vector<DeltaReport> group;
            for (const auto& d : deltas)
                if (d.baseline_name == b)
                    group.push_back(d);
            out.text += "\nChange vs baseline " + b + "\n" + render_delta_table(group);
        }
    }
    return out;
}

/// Writes report.json and report.txt into the directory.
inline RenderedReports emit_reports(std::span<const RunRecord> records, const std::optional<std::string>& baseline,
                                    const std::filesystem::path& out_dir)
{
    auto reports = render_reports(records, baseline);
    std::filesystem::create_directories(out_dir);
    std::ofstream json(out_dir / "report.json", std::ios::binary);
    std::ofstream text(out_dir / "report.txt", std::ios::binary);
    if (!json || !text)
        throw HarnessError("cannot write reports into " + out_dir.string());
    json << reports.json.dump(2) << '\n';
    text << reports.text;
    return reports;
}

} // namespace flowrag
