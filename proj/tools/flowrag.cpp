// flowrag: command-line front end for parsing, validation, scoring,
// retrieval indexes, TST pairs, dataset splits and experiment runs.
//
// Exit codes: 0 success, 1 the input was processed but failed the check
// (parse error, made-up APIs, missing predictions), 2 usage, configuration or I/O error.

#include "flowrag/ast_json.hpp"
#include "flowrag/catalog.hpp"
#include "flowrag/harness.hpp"
#include "flowrag/metrics.hpp"
#include "flowrag/retrieval.hpp"
#include "flowrag/run_config.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace flowrag;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

/// Usage, configuration and I/O problems; mapped to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UsageError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string format_score(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UsageError("cannot write " + path.string());
    out << text;
}

struct EmbedderOptions {
    std::string type = "hashing";
    std::size_t dimension = 256;
    std::string salt;
    std::string model;
    std::string url;

    void add_to(CLI::App* app)
    {
        app->add_option("--embedder", type, "Embedder type")->check(CLI::IsMember({"hashing", "http"}));
        app->add_option("--dimension", dimension, "Embedding dimension");
        app->add_option("--salt", salt, "Hashing embedder salt");
        app->add_option("--model", model, "Embedding model name (http)");
        app->add_option("--url", url, "Embedding endpoint base URL (http; default $FLOWRAG_EMBEDDING_URL)");
    }

    std::shared_ptr<const Embedder> make() const
    {
        nlohmann::json j = {{"type", type}, {"dimension", dimension}, {"salt", salt}, {"model", model}};
        if (!url.empty())
            j["url"] = url;
        return make_embedder(type, j);
    }
};

//===--------------------------------------------------------------------===//
// parse / validate
//===--------------------------------------------------------------------===//

int cmd_parse(const fs::path& file, bool canonical)
{
    const auto text = read_file(file);
    auto result = try_parse_flow(text);
    if (auto* err = std::get_if<ParseError>(&result)) {
        std::cerr << file.string() << ":" << err->what() << "\n";
        return kFailed;
    }
    const auto& flow = std::get<Flow>(result);
    if (canonical)
        std::cout << serialize_flow(flow);
    else
        std::cout << flow_to_json(flow).dump(2) << "\n";
    return kOk;
}

int cmd_validate(const fs::path& file, const fs::path& catalog_path)
{
    const auto catalog = load_catalog_file(catalog_path);
    const auto text = read_file(file);
    auto result = try_parse_flow(text);
    if (auto* err = std::get_if<ParseError>(&result)) {
        std::cerr << file.string() << ":" << err->what() << "\n";
        return kFailed;
    }
    const auto v = validate_flow(std::get<Flow>(result), catalog);
    for (const auto& name : v.made_up_functions)
        std::cout << "made-up function: " << name << "\n";
    for (const auto& p : v.made_up_parameters)
        std::cout << "made-up parameter: " << p.function_name << " " << p.key << "\n";
    if (v.clean()) {
        std::cout << "ok\n";
        return kOk;
    }
    return kFailed;
}

//===--------------------------------------------------------------------===//
// score
//===--------------------------------------------------------------------===//

int cmd_score(const fs::path& predictions_path, const fs::path& gold_path, const std::optional<fs::path>& catalog_path,
              bool as_json)
{
    const auto gold = load_dataset(gold_path);
    std::optional<ApiCatalog> catalog;
    if (catalog_path)
        catalog = load_catalog_file(*catalog_path);

    std::map<std::string, std::string> predictions;
    std::ifstream in(predictions_path, std::ios::binary);
    if (!in)
        throw UsageError("cannot open " + predictions_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(predictions_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const char* field = j.contains("prediction") ? "prediction" : "flow";
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains(field) || !j[field].is_string())
            throw UsageError(predictions_path.string() + ":" + std::to_string(line_no) +
                             ": record needs string fields 'id' and 'prediction' (or 'flow')");
        if (!predictions.emplace(j["id"].get<std::string>(), j[field].get<std::string>()).second)
            throw UsageError(predictions_path.string() + ":" + std::to_string(line_no) + ": duplicate id '" +
                             j["id"].get<std::string>() + "'");
    }

    std::vector<EvaluationOutcome> outcomes;
    std::size_t missing = 0;
    for (const auto& s : gold) {
        auto it = predictions.find(s.id);
        if (it == predictions.end())
            ++missing;
        outcomes.push_back(score_sample(s.id, it == predictions.end() ? std::string() : it->second, *s.flow,
                                        catalog ? &*catalog : nullptr));
    }
    for (const auto& [id, text] : predictions)
        if (std::none_of(gold.begin(), gold.end(), [&](const Sample& s) { return s.id == id; }))
            throw UsageError("prediction id '" + id + "' is not in the gold set");
    if (missing)
        std::cerr << "warning: " << missing << " gold sample(s) have no prediction and count as unparsed\n";
    if (outcomes.empty())
        throw UsageError("gold set is empty");

    const auto report = aggregate(outcomes);
    if (as_json) {
        std::cout << to_json(report).dump(2) << "\n";
    } else {
        std::cout << render_metrics_table(std::vector<NamedReport>{{"predictions", report}});
    }
    return missing ? kFailed : kOk;
}

//===--------------------------------------------------------------------===//
// index / tst / split
//===--------------------------------------------------------------------===//

int cmd_index_build(const fs::path& dataset, const fs::path& out, const EmbedderOptions& eo)
{
    const auto samples = load_dataset(dataset);
    const auto embedder = eo.make();
    const auto index = build_index(samples, *embedder);
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    index.save(out);
    std::cout << "indexed " << index.size() << " samples with " << embedder->name() << " into " << out.string()
              << "\n";
    return kOk;
}

int cmd_index_query(const fs::path& index_path, const std::string& query, std::size_t k, const EmbedderOptions& eo)
{
    const auto index = SampleIndex::load(index_path);
    const auto embedder = eo.make();
    if (!index.embedder_name().empty() && index.embedder_name() != embedder->name())
        throw UsageError("index was built with " + index.embedder_name() + ", query embedder is " + embedder->name());
    for (const auto& hit : retrieve_few_shots(index, query, k, *embedder))
        std::cout << hit.id << "\t" << format_score(hit.score) << "\n";
    return kOk;
}

int cmd_tst_pairs(const fs::path& dataset, const fs::path& out, std::size_t budget, double threshold,
                  const EmbedderOptions& eo)
{
    const auto samples = load_dataset(dataset);
    const auto embedder = eo.make();
    const auto pairs = generate_tst_pairs(samples, *embedder, budget, threshold);
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    write_tst_pairs(out, pairs);
    const auto positives = std::count_if(pairs.begin(), pairs.end(), [](const TstPair& p) { return p.positive; });
    std::cout << pairs.size() << " pairs (" << positives << " positive) written to " << out.string() << "\n";
    return kOk;
}

int cmd_tst_loss(const fs::path& pairs_path, const EmbedderOptions& eo)
{
    const auto pairs = read_tst_pairs(pairs_path);
    const auto embedder = eo.make();
    const double loss = tst_loss(pairs, embedder_similarity(*embedder));
    std::cout << embedder->name() << "\t" << format_score(loss) << "\n";
    return kOk;
}

int cmd_split(const fs::path& dataset, std::vector<std::string> held_out, const std::optional<fs::path>& held_out_file,
              std::optional<std::size_t> test_count, double test_fraction, std::uint64_t seed, const fs::path& out_dir)
{
    if (held_out_file) {
        std::istringstream lines(read_file(*held_out_file));
        for (std::string line; std::getline(lines, line);) {
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#')
                continue;
            held_out.push_back(line.substr(first, line.find_last_not_of(" \t\r") - first + 1));
        }
    }
    const auto samples = load_dataset(dataset);
    SplitConfig cfg{held_out, test_count, test_fraction, seed};
    const auto split = make_ood_split(samples, cfg);
    fs::create_directories(out_dir);
    write_dataset(out_dir / "train.jsonl", split.train);
    write_dataset(out_dir / "test_in_domain.jsonl", split.test_in_domain);
    write_dataset(out_dir / "test_out_of_domain.jsonl", split.test_out_of_domain);
    std::cout << "train " << split.train.size() << ", in-domain test " << split.test_in_domain.size()
              << ", out-of-domain test " << split.test_out_of_domain.size() << "\n";
    return kOk;
}

//===--------------------------------------------------------------------===//
// run / report
//===--------------------------------------------------------------------===//

struct RunArgs {
    fs::path config;
    fs::path out_dir = "flowrag-out";
    std::optional<fs::path> fixture;
    std::optional<fs::path> write_echo_fixture;
    std::optional<std::size_t> concurrency;
    bool store_full_prompts = false;
    std::optional<std::string> baseline;
};

int cmd_run(const RunArgs& args)
{
    auto cfg = load_run_config(args.config);
    if (args.concurrency)
        cfg.options.concurrency = *args.concurrency;
    if (args.store_full_prompts)
        cfg.options.store_full_prompts = true;
    if (args.baseline)
        cfg.baseline = args.baseline;

    ConfiguredRun run(std::move(cfg));
    if (args.write_echo_fixture) {
        const auto fixture = run.echo_fixture();
        if (args.write_echo_fixture->has_parent_path())
            fs::create_directories(args.write_echo_fixture->parent_path());
        MockCompletionClient::write_fixture(*args.write_echo_fixture, fixture);
        std::cout << "wrote " << fixture.size() << " fixture entries to " << args.write_echo_fixture->string() << "\n";
        return kOk;
    }

    const auto client = make_client(run.config().client, run.config().base_dir, args.fixture);
    const auto records = run.run_all(*client);
    const auto reports = emit_reports(records, run.config().baseline, args.out_dir);

    nlohmann::ordered_json runs = {{"baseline", nullptr}, {"runs", nlohmann::ordered_json::array()}};
    if (run.config().baseline)
        runs["baseline"] = *run.config().baseline;
    for (const auto& r : records)
        runs["runs"].push_back(to_json(r));
    write_file(args.out_dir / "runs.json", runs.dump(2) + "\n");
    std::cout << reports.text;
    return kOk;
}

int cmd_report(const fs::path& runs_path, const std::optional<std::string>& baseline, const fs::path& out_dir)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(runs_path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("malformed " + runs_path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("runs") || !j["runs"].is_array())
        throw UsageError(runs_path.string() + " must hold an object with a \"runs\" array");
    auto chosen = baseline;
    if (!chosen && j.contains("baseline") && j["baseline"].is_string())
        chosen = j["baseline"].get<std::string>();
    std::vector<RunRecord> records;
    for (const auto& r : j["runs"])
        records.push_back(run_record_from_json(r));
    std::cout << emit_reports(records, chosen, out_dir).text;
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Workflow DSL toolkit: parse, validate, score, retrieve and run grounding experiments"};
    app.require_subcommand(1);
    int status = kOk;

    // parse
    fs::path parse_file;
    bool canonical = false;
    auto* parse = app.add_subcommand("parse", "Check a DSL file and print its syntax tree");
    parse->add_option("file", parse_file, "DSL file")->required();
    parse->add_flag("--canonical", canonical, "Print canonical DSL text instead of the JSON tree");
    parse->callback([&] { status = cmd_parse(parse_file, canonical); });

    // validate
    fs::path validate_file, validate_catalog;
    auto* validate = app.add_subcommand("validate", "Check a flow's functions and parameters against a catalog");
    validate->add_option("file", validate_file, "DSL file")->required();
    validate->add_option("--catalog", validate_catalog, "Catalog JSON")->required();
    validate->callback([&] { status = cmd_validate(validate_file, validate_catalog); });

    // score
    fs::path score_pred, score_gold;
    std::optional<fs::path> score_catalog;
    bool score_json = false;
    auto* score = app.add_subcommand("score", "Score predictions against gold flows");
    score->add_option("--predictions", score_pred, "JSONL with id and prediction (or flow)")->required();
    score->add_option("--gold", score_gold, "Gold dataset JSONL")->required();
    score->add_option("--catalog", score_catalog, "Catalog JSON for made-up API checks");
    score->add_flag("--json", score_json, "Print the report as JSON");
    score->callback([&] { status = cmd_score(score_pred, score_gold, score_catalog, score_json); });

    // index
    auto* index = app.add_subcommand("index", "Few-shot retrieval index");
    index->require_subcommand(1);
    fs::path index_dataset, index_out, index_file;
    std::string query_text;
    std::size_t top_k = 5;
    EmbedderOptions index_build_emb, index_query_emb;
    auto* index_build = index->add_subcommand("build", "Embed a dataset's prompts into an index file");
    index_build->add_option("--dataset", index_dataset, "Dataset JSONL")->required();
    index_build->add_option("--out", index_out, "Index file")->required();
    index_build_emb.add_to(index_build);
    index_build->callback([&] { status = cmd_index_build(index_dataset, index_out, index_build_emb); });
    auto* index_query = index->add_subcommand("query", "Top-k samples for a query");
    index_query->add_option("--index", index_file, "Index file")->required();
    index_query->add_option("--query", query_text, "Natural-language query")->required();
    index_query->add_option("-k,--top-k", top_k, "Number of results");
    index_query_emb.add_to(index_query);
    index_query->callback([&] { status = cmd_index_query(index_file, query_text, top_k, index_query_emb); });

    // tst
    auto* tst = app.add_subcommand("tst", "Target similarity tuning pairs and loss");
    tst->require_subcommand(1);
    fs::path tst_dataset, tst_out, tst_pairs_file;
    std::size_t budget = 100000;
    double threshold = kTstPositiveThreshold;
    EmbedderOptions tst_pairs_emb, tst_loss_emb;
    auto* tst_pairs = tst->add_subcommand("pairs", "Generate labelled pairs");
    tst_pairs->add_option("--dataset", tst_dataset, "Dataset JSONL")->required();
    tst_pairs->add_option("--out", tst_out, "Pairs JSONL")->required();
    tst_pairs->add_option("--budget", budget, "Maximum number of pairs");
    tst_pairs->add_option("--threshold", threshold, "Cosine above which a pair is positive");
    tst_pairs_emb.add_to(tst_pairs);
    tst_pairs->callback([&] { status = cmd_tst_pairs(tst_dataset, tst_out, budget, threshold, tst_pairs_emb); });
    auto* tst_loss_cmd = tst->add_subcommand("loss", "Mean squared error of an embedder on pairs");
    tst_loss_cmd->add_option("--pairs", tst_pairs_file, "Pairs JSONL")->required();
    tst_loss_emb.add_to(tst_loss_cmd);
    tst_loss_cmd->callback([&] { status = cmd_tst_loss(tst_pairs_file, tst_loss_emb); });

    // split
    fs::path split_dataset, split_out;
    std::vector<std::string> held_out;
    std::optional<fs::path> held_out_file;
    std::optional<std::size_t> test_count;
    double test_fraction = 0.0;
    std::uint64_t seed = 0;
    auto* split = app.add_subcommand("split", "Out-of-domain split by held-out APIs");
    split->add_option("--dataset", split_dataset, "Dataset JSONL")->required();
    split->add_option("--held-out", held_out, "Held-out qualified API names")->delimiter(',');
    split->add_option("--held-out-file", held_out_file, "File with one held-out API per line");
    split->add_option("--test-count", test_count, "In-domain test samples to draw");
    split->add_option("--test-fraction", test_fraction, "In-domain test fraction (ignored with --test-count)")
        ->check(CLI::Range(0.0, 1.0));
    split->add_option("--seed", seed, "Sampling seed");
    split->add_option("--out-dir", split_out, "Output directory")->required();
    split->callback(
        [&] { status = cmd_split(split_dataset, held_out, held_out_file, test_count, test_fraction, seed, split_out); });

    // run
    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run the experiments of a configuration file");
    run->add_option("--config", run_args.config, "Run configuration JSON")->required();
    run->add_option("--out", run_args.out_dir, "Output directory for reports");
    run->add_option("--fixture", run_args.fixture, "Mock fixture, overriding the configuration");
    run->add_option("--write-echo-fixture", run_args.write_echo_fixture,
                    "Write a fixture answering every prompt with its gold flow, then exit");
    run->add_option("--concurrency", run_args.concurrency, "In-flight completions");
    run->add_flag("--store-full-prompts", run_args.store_full_prompts, "Keep rendered prompts in runs.json");
    run->add_option("--baseline", run_args.baseline, "Baseline experiment name");
    run->callback([&] { status = cmd_run(run_args); });

    // report
    fs::path report_runs, report_out = "flowrag-out";
    std::optional<std::string> report_baseline;
    auto* report = app.add_subcommand("report", "Render reports from a saved runs.json");
    report->add_option("--runs", report_runs, "runs.json written by run")->required();
    report->add_option("--baseline", report_baseline, "Baseline experiment name");
    report->add_option("--out", report_out, "Output directory");
    report->callback([&] { status = cmd_report(report_runs, report_baseline, report_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return status;
}
