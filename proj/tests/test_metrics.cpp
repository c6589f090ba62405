#include "flowrag/metrics.hpp"

#include "support/golden.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace flowrag;
namespace golden = flowrag::testing;

namespace {

std::vector<std::string> random_sequence(std::mt19937& rng, std::size_t max_len, std::size_t alphabet)
{
    std::vector<std::string> seq(rng() % (max_len + 1));
    for (auto& s : seq)
        s = std::string(1, static_cast<char>('a' + rng() % alphabet));
    return seq;
}

Flow flow_of_calls(const std::vector<std::string>& names)
{
    Flow flow;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto parts = split_qualified_name(names[i]);
        flow.statements.push_back(Statement{ApiCallStatement{"v" + std::to_string(i), false,
                                                             ApiCall{parts->first, parts->second, {}}}});
    }
    return flow;
}

EvaluationOutcome outcome(bool parsed, bool fn, bool param, double sim)
{
    return {"id", parsed, fn, param, sim};
}

} // namespace

TEST(LcssLength, FormsExample)
{
    const auto truth = extract_api_sequence(parse_flow(golden::kFormsTruth));
    const auto pred = extract_api_sequence(parse_flow(golden::kFormsPrediction));
    EXPECT_EQ(lcss_length(pred, truth), 2u);
}

TEST(LcssLength, SelfAndBounds)
{
    std::mt19937 rng(17);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_sequence(rng, 10, 4);
        const auto b = random_sequence(rng, 10, 4);
        EXPECT_EQ(lcss_length(a, a), a.size());
        EXPECT_LE(lcss_length(a, b), std::min(a.size(), b.size()));
        EXPECT_EQ(lcss_length(a, b), lcss_length(b, a));
    }
}

TEST(LcssLength, MatchesExhaustiveEnumeration)
{
    std::mt19937 rng(23);
    for (int i = 0; i < 300; ++i) {
        const auto a = random_sequence(rng, 8, 5);
        const auto b = random_sequence(rng, 8, 5);
        ASSERT_EQ(lcss_length(a, b), golden::brute_force_lcss(a, b));
    }
}

TEST(FlowSimilarity, FormsExampleIsTwoThirds)
{
    const double s = flow_similarity(parse_flow(golden::kFormsPrediction), parse_flow(golden::kFormsTruth));
    EXPECT_NEAR(s, 2.0 / 3.0, 1e-12);
}

TEST(FlowSimilarity, IdenticalDisjointAndEmpty)
{
    const Flow a = parse_flow("x = a.F({}); y = b.G({});");
    EXPECT_EQ(flow_similarity(a, a), 1.0);
    EXPECT_EQ(flow_similarity(a, parse_flow("z = c.H({});")), 0.0);
    EXPECT_EQ(sequence_similarity({}, {}), 1.0);
    const std::vector<std::string> one{"a.F"};
    EXPECT_EQ(sequence_similarity(one, {}), 0.0);
}

TEST(FlowSimilarity, BoundedAndSymmetric)
{
    std::mt19937 rng(29);
    for (int i = 0; i < 200; ++i) {
        auto a = random_sequence(rng, 6, 4);
        auto b = random_sequence(rng, 6, 4);
        for (auto& s : a) s = "ns." + s;
        for (auto& s : b) s = "ns." + s;
        const Flow fa = flow_of_calls(a);
        const Flow fb = flow_of_calls(b);
        const double s = flow_similarity(fa, fb);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        EXPECT_EQ(s, flow_similarity(fb, fa));
    }
}

TEST(JaccardProgramSimilarity, FormsPairIsTwoThirds)
{
    const double j =
        jaccard_program_similarity(parse_flow(golden::kFormsPrediction), parse_flow(golden::kFormsTruth));
    EXPECT_NEAR(j, 2.0 / 3.0, 1e-12);
}

TEST(JaccardProgramSimilarity, MatchesSetOracle)
{
    std::mt19937 rng(31);
    for (int i = 0; i < 300; ++i) {
        auto a = random_sequence(rng, 6, 5);
        auto b = random_sequence(rng, 6, 5);
        for (auto& s : a) s = "n." + s;
        for (auto& s : b) s = "n." + s;
        EXPECT_EQ(jaccard_program_similarity(flow_of_calls(a), flow_of_calls(b)),
                  golden::brute_force_jaccard(a, b));
    }
    const Flow a = parse_flow("x = a.F({});");
    EXPECT_EQ(jaccard_program_similarity(a, a), 1.0);
}

TEST(JaccardProgramSimilarity, SetVersusSequenceSemantics)
{
    const Flow once = parse_flow("x = a.F({}); y = b.G({});");
    const Flow twice = parse_flow("x = a.F({}); x2 = a.F({}); y = b.G({});");
    EXPECT_EQ(jaccard_program_similarity(once, twice), 1.0);
    EXPECT_NEAR(flow_similarity(once, twice), 2.0 / 3.0, 1e-12);
}

TEST(ScoreSample, SerializedTruthIsPerfect)
{
    const auto catalog = load_catalog(golden::kFormsCatalog);
    const Flow truth = parse_flow(golden::kFormsTruth);
    const auto o = score_sample("a1", serialize_flow(truth), truth, catalog);
    EXPECT_EQ(o, (EvaluationOutcome{"a1", true, false, false, 1.0}));
}

TEST(ScoreSample, FabricatedFunctionZeroesSimilarity)
{
    const auto catalog = load_catalog(golden::kFormsCatalog);
    const Flow truth = parse_flow(golden::kFormsTruth);
    const auto o = score_sample("a1",
                                "t = await shared_microsoftforms.CreateFormWebhook({}); "
                                "p = shared_teams.PostMessageToConversation({}); q = shared_fake.Invent({});",
                                truth, catalog);
    EXPECT_TRUE(o.parsed);
    EXPECT_TRUE(o.has_made_up_function);
    EXPECT_EQ(o.similarity, 0.0);
}

TEST(ScoreSample, MadeUpParameterKeepsSimilarity)
{
    const auto catalog = load_catalog(golden::kFormsCatalog);
    const Flow truth = parse_flow(golden::kFormsTruth);
    const std::string text = "t = await shared_microsoftforms.CreateFormWebhook({}); "
                             "p = shared_teams.PostMessageToConversation({\"posterx\": \"User\"});";
    const auto o = score_sample("a1", text, truth, catalog);

    // Composed oracle: validation and similarity computed independently.
    const Flow pred = parse_flow(text);
    const auto v = validate_flow(pred, catalog);
    EXPECT_TRUE(v.made_up_functions.empty());
    EXPECT_FALSE(v.made_up_parameters.empty());
    EXPECT_EQ(o.similarity, flow_similarity(pred, truth));
    EXPECT_EQ(o.similarity, 1.0);
    EXPECT_TRUE(o.has_made_up_parameter);
    EXPECT_FALSE(o.has_made_up_function);
}

TEST(ScoreSample, UnparsedPrediction)
{
    const Flow truth = parse_flow(golden::kFormsTruth);
    const auto o = score_sample("a1", "not a flow", truth, nullptr);
    EXPECT_EQ(o, (EvaluationOutcome{"a1", false, false, false, 0.0}));
}

TEST(ScoreSample, FormsPredictionWithCatalog)
{
    const auto catalog = load_catalog(golden::kFormsCatalog);
    const auto o = score_sample("a1", golden::kFormsPrediction, parse_flow(golden::kFormsTruth), catalog);
    EXPECT_TRUE(o.parsed);
    EXPECT_FALSE(o.has_made_up_function);
    EXPECT_FALSE(o.has_made_up_parameter);
    EXPECT_NEAR(o.similarity, 2.0 / 3.0, 1e-12);
}

TEST(Aggregate, AllPerfect)
{
    const std::vector<EvaluationOutcome> all(10, outcome(true, false, false, 1.0));
    const auto r = aggregate(all);
    EXPECT_EQ(r.average_similarity, 1.0);
    EXPECT_EQ(r.unparsed_pct, 0.0);
    EXPECT_EQ(r.made_up_api_pct, 0.0);
    EXPECT_EQ(r.made_up_param_pct, 0.0);
    EXPECT_EQ(r.counts, (MetricCounts{10, 10, 0, 0, 0}));
}

TEST(Aggregate, MixedOutcomes)
{
    // 1 unparsed, 1 made-up function, 2 perfect:
    // unparsed 1/4, made-up API 1/3 of parsed, similarity (0+0+1+1)/4.
    const std::vector<EvaluationOutcome> outcomes = {outcome(false, false, false, 0.0),
                                                     outcome(true, true, false, 0.0),
                                                     outcome(true, false, false, 1.0),
                                                     outcome(true, false, false, 1.0)};
    const auto r = aggregate(outcomes);
    EXPECT_EQ(r.unparsed_pct, 25.0);
    EXPECT_EQ(r.made_up_api_pct, 100.0 * 1.0 / 3.0);
    EXPECT_EQ(r.average_similarity, 0.5);
    EXPECT_EQ(r.made_up_param_pct, 0.0);
    EXPECT_EQ(r.counts, (MetricCounts{4, 3, 1, 0, 1}));
}

TEST(Aggregate, RatesUseParsedDenominator)
{
    std::mt19937 rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<EvaluationOutcome> outcomes;
        std::size_t parsed = 0, k = 0, kp = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = rng() % 4 != 0;
            const bool fn = p && rng() % 3 == 0;
            const bool param = p && rng() % 3 == 0;
            parsed += p;
            k += fn;
            kp += param;
            outcomes.push_back(outcome(p, fn, param, (p && !fn) ? (rng() % 5) / 4.0 : 0.0));
        }
        const auto r = aggregate(outcomes);
        EXPECT_EQ(r.counts.parsed, parsed);
        EXPECT_EQ(r.counts.unparsed, n - parsed);
        if (parsed) {
            EXPECT_EQ(r.made_up_api_pct, 100.0 * static_cast<double>(k) / static_cast<double>(parsed));
            EXPECT_EQ(r.made_up_param_pct, 100.0 * static_cast<double>(kp) / static_cast<double>(parsed));
        }
        EXPECT_EQ(r.unparsed_pct, static_cast<double>(n - parsed) / static_cast<double>(n) * 100.0);

        auto shuffled = outcomes;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_EQ(aggregate(shuffled), r);
    }
}

TEST(Aggregate, NothingParsed)
{
    const std::vector<EvaluationOutcome> outcomes(3, outcome(false, false, false, 0.0));
    const auto r = aggregate(outcomes);
    EXPECT_EQ(r.unparsed_pct, 100.0);
    EXPECT_EQ(r.made_up_api_pct, 0.0);
}

TEST(Aggregate, EmptyIsAnError)
{
    EXPECT_THROW(aggregate(std::vector<EvaluationOutcome>{}), MetricsError);
}

TEST(DeltaReport, EqualReportsGiveZero)
{
    const std::vector<EvaluationOutcome> outcomes = {outcome(true, false, true, 0.5), outcome(false, false, false, 0)};
    const auto r = aggregate(outcomes);
    const auto d = delta_report(r, r, "base", "cand");
    EXPECT_EQ(d, (DeltaReport{"base", "cand", 0, 0, 0, 0}));
}

TEST(DeltaReport, SignConvention)
{
    MetricsReport base;
    base.counts.total = 100;
    base.average_similarity = 0.60;
    base.made_up_api_pct = 10.0;
    MetricsReport cand = base;
    cand.average_similarity = 0.62;
    cand.made_up_api_pct = 3.71;
    const auto d = delta_report(base, cand, "Pre-trained", "TST w/o FD");
    EXPECT_NEAR(d.average_similarity, 0.02, 1e-12);
    EXPECT_EQ(format_delta(d.average_similarity), "+0.02");
    EXPECT_EQ(format_delta(d.made_up_api_pct), "-6.29");
    EXPECT_EQ(format_delta(d.unparsed_pct), "0.00");
    EXPECT_EQ(format_delta(-0.001), "0.00");
}

TEST(DeltaReport, ElementwiseSubtraction)
{
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u(0, 100);
    for (int i = 0; i < 50; ++i) {
        MetricsReport a, b;
        a.counts.total = b.counts.total = 7;
        a.average_similarity = u(rng) / 100;
        b.average_similarity = u(rng) / 100;
        a.unparsed_pct = u(rng), b.unparsed_pct = u(rng);
        a.made_up_api_pct = u(rng), b.made_up_api_pct = u(rng);
        a.made_up_param_pct = u(rng), b.made_up_param_pct = u(rng);
        const auto d = delta_report(a, b);
        EXPECT_EQ(d.average_similarity, b.average_similarity - a.average_similarity);
        EXPECT_EQ(d.unparsed_pct, b.unparsed_pct - a.unparsed_pct);
        EXPECT_EQ(d.made_up_api_pct, b.made_up_api_pct - a.made_up_api_pct);
        EXPECT_EQ(d.made_up_param_pct, b.made_up_param_pct - a.made_up_param_pct);
    }
}

TEST(DeltaReport, MismatchedTotalsIsAnError)
{
    MetricsReport a, b;
    a.counts.total = 3;
    b.counts.total = 4;
    EXPECT_THROW(delta_report(a, b), MetricsError);
}

TEST(Tables, AlignedColumns)
{
    MetricsReport r;
    r.counts.total = 4;
    r.average_similarity = 0.5;
    r.unparsed_pct = 25.0;
    r.made_up_api_pct = 100.0 / 3.0;
    const std::vector<NamedReport> rows = {{"TST + FD", r}};
    EXPECT_EQ(render_metrics_table(rows),
              "Model     Avg. Similarity  %Unparsed flows  %Made-up API names  %Made-up API parameters\n"
              "TST + FD             0.50            25.00               33.33                     0.00\n");

    const std::vector<DeltaReport> deltas = {{"base", "TST + FD", 0.02, 0.68, -6.29, -19.99}};
    EXPECT_EQ(render_delta_table(deltas),
              "Model     Avg. Similarity  %Unparsed flows  %Made-up API names  %Made-up API parameters\n"
              "TST + FD            +0.02            +0.68               -6.29                   -19.99\n");
}

TEST(Serialization, JsonRoundTrip)
{
    const std::vector<EvaluationOutcome> outcomes = {outcome(true, true, true, 0.0), outcome(true, false, false, 0.75)};
    const auto r = aggregate(outcomes);
    EXPECT_EQ(metrics_from_json(nlohmann::json::parse(to_json(r).dump())), r);
    EXPECT_EQ(outcome_from_json(nlohmann::json::parse(to_json(outcomes[1]).dump())), outcomes[1]);
}
