#include "support/golden.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace fs = std::filesystem;
namespace fx = flowrag::testing;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        static int counter = 0;
        dir_ = fs::temp_directory_path() /
               ("flowrag_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path file(const std::string& name, std::string_view text) const
    {
        const auto p = dir_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    // Runs the CLI with stdout captured; stderr is folded in when `merge` is set.
    Result run(const std::string& args, bool merge = false) const
    {
        const std::string cmd = std::string("'") + FLOWRAG_CLI + "' " + args + (merge ? " 2>&1" : " 2>/dev/null");
        Result r;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe)
            return r;
        std::array<char, 4096> buf{};
        std::size_t n = 0;
        while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0)
            r.out.append(buf.data(), n);
        const int status = ::pclose(pipe);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return r;
    }

    void write_corpus(std::size_t train, std::size_t test) const
    {
        const auto corpus = fx::synthetic_corpus(train + test, 5);
        fx::write_jsonl(dir_ / "train.jsonl", {corpus.begin(), corpus.begin() + static_cast<long>(train)});
        fx::write_jsonl(dir_ / "test.jsonl", {corpus.begin() + static_cast<long>(train), corpus.end()});
        fx::write_catalog(dir_ / "catalog.json");
    }

    fs::path dir_;
};

TEST_F(CliTest, ParseGroundTruthPrintsTree)
{
    const auto r = run("parse " + file("truth.dsl", fx::kFormsTruth).string());
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    ASSERT_EQ(j["statements"].size(), 2u);
    EXPECT_EQ(j["statements"][0]["function"], "shared_microsoftforms.CreateFormWebhook");
    EXPECT_TRUE(j["statements"][0]["await"].get<bool>());
    EXPECT_EQ(j["statements"][1]["arguments"]["poster"], "User");
}

TEST_F(CliTest, ParseCanonical)
{
    const auto r = run("parse --canonical " + file("p.dsl", fx::kFormsPrediction).string());
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("shared_office365users.MyProfile_V2"), std::string::npos);
    EXPECT_EQ(run("parse " + file("again.dsl", r.out).string()).code, 0);
}

TEST_F(CliTest, ParseErrorReportsPosition)
{
    const auto r = run("parse " + file("bad.dsl", "x = = ;").string(), true);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("bad.dsl:line 1, column 5"), std::string::npos) << r.out;
}

TEST_F(CliTest, Validate)
{
    const auto forms = file("forms.json", fx::kFormsCatalog).string();
    const auto email = file("email.json", fx::kSendEmailCatalog).string();
    const auto pred = file("pred.dsl", fx::kFormsPrediction).string();
    EXPECT_EQ(run("validate " + pred + " --catalog " + forms).code, 0);
    const auto r = run("validate " + pred + " --catalog " + email);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("made-up function: shared_teams.PostMessageToConversation"), std::string::npos);
}

TEST_F(CliTest, ScoreIdenticalFiles)
{
    write_corpus(0, 12);
    const auto r = run("score --predictions " + path("test.jsonl") + " --gold " + path("test.jsonl") +
                       " --catalog " + path("catalog.json") + " --json");
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["average_similarity"].get<double>(), 1.0);
    EXPECT_EQ(j["unparsed_pct"].get<double>(), 0.0);
    EXPECT_EQ(j["made_up_api_pct"].get<double>(), 0.0);
    EXPECT_EQ(j["made_up_param_pct"].get<double>(), 0.0);

    const auto table = run("score --predictions " + path("test.jsonl") + " --gold " + path("test.jsonl"));
    ASSERT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("1.00"), std::string::npos);
}

TEST_F(CliTest, ScoreMissingAndUnknownPredictions)
{
    write_corpus(0, 4);
    std::ifstream gold(path("test.jsonl"));
    std::string line;
    std::string preds;
    for (int i = 0; std::getline(gold, line); ++i) {
        auto j = nlohmann::json::parse(line);
        if (i == 0)
            continue;
        preds += nlohmann::json{{"id", j["id"]}, {"prediction", j["flow"]}}.dump() + "\n";
    }
    const auto missing = run("score --json --predictions " + file("p.jsonl", preds).string() + " --gold " +
                             path("test.jsonl"));
    EXPECT_EQ(missing.code, 1);
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(missing.out)["unparsed_pct"].get<double>(), 25.0);

    preds += R"({"id": "nope", "prediction": ""})" "\n";
    EXPECT_EQ(run("score --predictions " + file("q.jsonl", preds).string() + " --gold " + path("test.jsonl")).code,
              2);
}

TEST_F(CliTest, IndexBuildAndQuery)
{
    write_corpus(30, 0);
    ASSERT_EQ(run("index build --dataset " + path("train.jsonl") + " --out " + path("idx.json")).code, 0);

    std::ifstream train(path("train.jsonl"));
    std::string line;
    std::getline(train, line);
    const auto first = nlohmann::json::parse(line);
    const auto r = run("index query -k 3 --index " + path("idx.json") + " --query '" +
                       first["prompt"].get<std::string>() + "'");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.substr(0, r.out.find('\t')), first["id"].get<std::string>());
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);

    EXPECT_EQ(run("index query --salt other --index " + path("idx.json") + " --query x").code, 2);
}

TEST_F(CliTest, TstPairsAndLoss)
{
    write_corpus(20, 0);
    const auto pairs = run("tst pairs --budget 50 --dataset " + path("train.jsonl") + " --out " + path("pairs.jsonl"));
    ASSERT_EQ(pairs.code, 0);
    std::ifstream in(path("pairs.jsonl"));
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);)
        lines += !l.empty();
    EXPECT_EQ(lines, 50u);

    const auto loss = run("tst loss --pairs " + path("pairs.jsonl"));
    ASSERT_EQ(loss.code, 0);
    const double value = std::stod(loss.out.substr(loss.out.find('\t') + 1));
    EXPECT_GE(value, 0.0);
    EXPECT_LE(value, 1.0);
}

TEST_F(CliTest, SplitPartitionsDataset)
{
    write_corpus(40, 0);
    const auto r = run("split --dataset " + path("train.jsonl") +
                       " --held-out shared_teams.PostMessageToConversation --test-count 5 --seed 9 --out-dir " +
                       path("split"));
    ASSERT_EQ(r.code, 0);
    std::multiset<std::string> ids;
    std::size_t ood = 0;
    for (const char* name : {"train.jsonl", "test_in_domain.jsonl", "test_out_of_domain.jsonl"}) {
        std::ifstream in(dir_ / "split" / name);
        for (std::string l; std::getline(in, l);) {
            const auto j = nlohmann::json::parse(l);
            ids.insert(j["id"].get<std::string>());
            const bool has = j["flow"].get<std::string>().find("shared_teams.PostMessageToConversation") !=
                             std::string::npos;
            EXPECT_EQ(has, std::string(name) == "test_out_of_domain.jsonl") << name;
            ood += has;
        }
    }
    EXPECT_EQ(ids.size(), 40u);
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 40u);
    EXPECT_GT(ood, 0u);
}

TEST_F(CliTest, RunEchoFixtureIsPerfectAndReproducible)
{
    write_corpus(30, 10);
    file("run.json", R"({
      "dataset": {"train": "train.jsonl", "test": "test.jsonl"},
      "catalog": "catalog.json",
      "client": {"type": "mock", "fixture": "fixture.json"},
      "baseline": "base",
      "experiments": [
        {"name": "base", "selection_model": "pretrained", "few_shot_count": 5, "include_fd": false},
        {"name": "tst fd sfd", "selection_model": "tst", "few_shot_count": 5, "include_fd": true, "include_sfd": true}
      ]
    })");
    ASSERT_EQ(run("run --config " + path("run.json") + " --write-echo-fixture " + path("fixture.json")).code, 0);
    ASSERT_EQ(run("run --config " + path("run.json") + " --out " + path("a")).code, 0);
    ASSERT_EQ(run("run --concurrency 1 --config " + path("run.json") + " --out " + path("b")).code, 0);

    EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
    EXPECT_EQ(slurp(dir_ / "a" / "report.txt"), slurp(dir_ / "b" / "report.txt"));
    const auto report = nlohmann::json::parse(slurp(dir_ / "a" / "report.json"));
    ASSERT_EQ(report["experiments"].size(), 2u);
    for (const auto& e : report["experiments"]) {
        EXPECT_EQ(e["metrics"]["average_similarity"].get<double>(), 1.0);
        EXPECT_EQ(e["metrics"]["unparsed_pct"].get<double>(), 0.0);
        EXPECT_EQ(e["metrics"]["made_up_api_pct"].get<double>(), 0.0);
        EXPECT_EQ(e["metrics"]["made_up_param_pct"].get<double>(), 0.0);
    }
    EXPECT_EQ(report["deltas"].size(), 1u);

    ASSERT_EQ(run("report --runs " + path("a/runs.json") + " --out " + path("c")).code, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "c" / "report.json"));
    EXPECT_EQ(slurp(dir_ / "a" / "report.txt"), slurp(dir_ / "c" / "report.txt"));
    EXPECT_EQ(run("report --baseline missing --runs " + path("a/runs.json") + " --out " + path("d")).code, 2);
}

TEST_F(CliTest, RunWithoutFixtureEntriesCountsUnparsed)
{
    write_corpus(10, 4);
    file("empty.json", "{}");
    file("run.json", R"({
      "dataset": {"train": "train.jsonl", "test": "test.jsonl"},
      "catalog": "catalog.json",
      "client": {"type": "mock", "fixture": "empty.json"},
      "experiments": [{"name": "only"}]
    })");
    ASSERT_EQ(run("run --config " + path("run.json") + " --out " + path("o")).code, 0);
    const auto report = nlohmann::json::parse(slurp(dir_ / "o" / "report.json"));
    EXPECT_EQ(report["experiments"][0]["metrics"]["unparsed_pct"].get<double>(), 100.0);
}

TEST_F(CliTest, UsageErrors)
{
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("parse").code, 2);
    EXPECT_EQ(run("parse " + path("missing.dsl")).code, 2);
    EXPECT_EQ(run("run --config " + path("missing.json")).code, 2);
    EXPECT_EQ(run("run --config " + file("bad.json", "{\"dataset\": {}}").string()).code, 2);
}

} // namespace
