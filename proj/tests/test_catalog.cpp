#include "flowrag/catalog.hpp"

#include "support/golden.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace flowrag;
namespace golden = flowrag::testing;

namespace {

std::string duplicated_send_email_entry()
{
    // Same object key and FunctionName twice.
    std::string doc(golden::kSendEmailCatalog);
    const auto open = doc.find('"');
    const auto close = doc.rfind('}');
    const std::string entry = doc.substr(open, close - open);
    return "{" + entry + "," + entry + "}";
}

ApiCatalog teams_catalog()
{
    return load_catalog(R"({
      "shared_teams.PostMessageToConversation": {
        "FunctionName": "shared_teams.PostMessageToConversation",
        "ParametersInfo": [{"Key": "poster"}, {"Key": "location"}]
      }})");
}

} // namespace

TEST(LoadCatalog, SendEmailEntry)
{
    const ApiCatalog catalog = load_catalog(golden::kSendEmailCatalog);
    ASSERT_EQ(catalog.size(), 1u);
    const FunctionDefinition* def = catalog.find("shared_outlook.SendEmailV2");
    ASSERT_NE(def, nullptr);
    EXPECT_EQ(def->display_name, "Send an email (V2)");
    EXPECT_EQ(def->description, "This operation sends an email message.");
    EXPECT_FALSE(def->is_in_training_set);
    EXPECT_FALSE(def->is_trigger);
    ASSERT_EQ(def->parameters.size(), 1u);
    EXPECT_EQ(def->parameters[0].key, "emailMessage/To");
    EXPECT_EQ(def->parameters[0].type_name, "String");
    EXPECT_EQ(def->parameters[0].summary, "To");
    EXPECT_EQ(def->parameters[0].format, std::optional<std::string>("email"));
    EXPECT_TRUE(def->response_schema.is_array());
}

TEST(LoadCatalog, EmptyDocument)
{
    EXPECT_TRUE(load_catalog("{}").empty());
}

TEST(LoadCatalog, DuplicateNameIsAnError)
{
    try {
        load_catalog(duplicated_send_email_entry());
        FAIL() << "expected CatalogError";
    } catch (const CatalogError& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate function name 'shared_outlook.SendEmailV2'"),
                  std::string::npos);
    }
}

TEST(LoadCatalog, SameFunctionNameUnderTwoKeys)
{
    EXPECT_THROW(load_catalog(R"({
      "a.F": {"FunctionName": "a.F", "ParametersInfo": []},
      "alias": {"FunctionName": "a.F", "ParametersInfo": []}})"),
                 CatalogError);
}

TEST(LoadCatalog, SchemaErrorsNameTheEntry)
{
    const std::pair<const char*, const char*> cases[] = {
        {R"({"a.F": {"ParametersInfo": []}})", "FunctionName"},
        {R"({"a.F": {"FunctionName": "a.F"}})", "ParametersInfo"},
        {R"({"a.F": {"FunctionName": "a.F", "ParametersInfo": [{"Type": "x"}]}})", "Key"},
        {R"({"a.F": {"FunctionName": "a.F", "ParametersInfo": [], "IsTrigger": "yes"}})", "IsTrigger"},
        {R"({"a.F": {"FunctionName": "a.F", "ParametersInfo": [{"Key": "k"}, {"Key": "k"}]}})", "duplicate parameter"},
        {R"({"a.F": {"FunctionName": "aF", "ParametersInfo": []}})", "namespace.function"},
        {R"({"a.F": {"FunctionName": "a.b.F", "ParametersInfo": []}})", "namespace.function"},
        {R"({"a.F": 3})", "expected an object"},
    };
    for (const auto& [doc, needle] : cases) {
        try {
            load_catalog(doc);
            ADD_FAILURE() << "accepted: " << doc;
        } catch (const CatalogError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    }
    EXPECT_THROW(load_catalog("[]"), CatalogError);
    EXPECT_THROW(load_catalog("{"), CatalogError);
}

TEST(LoadCatalog, ExtraFieldsAreIgnored)
{
    const auto catalog = load_catalog(R"({"a.F": {"FunctionName": "a.F", "ParametersInfo": [], "Vendor": {"x": 1}}})");
    EXPECT_TRUE(catalog.contains("a.F"));
}

TEST(ValidateFlow, GroundTruthIsClean)
{
    const auto catalog = load_catalog(golden::kFormsCatalog);
    EXPECT_TRUE(validate_flow(parse_flow(golden::kFormsTruth), catalog).clean());
}

TEST(ValidateFlow, UnknownFunctionIsMadeUp)
{
    const auto result = validate_flow(parse_flow(R"(x = shared_fake.Nothing({"k": 1});)"), teams_catalog());
    EXPECT_EQ(result.made_up_functions, (std::vector<std::string>{"shared_fake.Nothing"}));
    EXPECT_TRUE(result.made_up_parameters.empty());
}

TEST(ValidateFlow, UnknownKeyIsMadeUpParameter)
{
    const Flow flow = parse_flow(R"(x = shared_teams.PostMessageToConversation({"poster": "User", "locationx": "Channel"});)");
    const auto result = validate_flow(flow, teams_catalog());
    EXPECT_TRUE(result.made_up_functions.empty());
    EXPECT_EQ(result.made_up_parameters,
              (std::vector<MadeUpParameter>{{"shared_teams.PostMessageToConversation", "locationx"}}));
}

TEST(ValidateFlow, BareKeyMatchesFinalPathSegment)
{
    const auto catalog = load_catalog(golden::kSendEmailCatalog);
    EXPECT_TRUE(validate_flow(parse_flow(R"(m = shared_outlook.SendEmailV2({"To": "a@b.c"});)"), catalog).clean());
    EXPECT_TRUE(
        validate_flow(parse_flow(R"(m = shared_outlook.SendEmailV2({"emailMessage/To": "a"});)"), catalog).clean());
    // Case-sensitive, and an inner segment is not a match.
    auto r = validate_flow(parse_flow(R"(m = shared_outlook.SendEmailV2({"to": "a", "emailMessage": "b"});)"), catalog);
    EXPECT_EQ(r.made_up_parameters.size(), 2u);
}

TEST(ValidateFlow, ResultsAreDistinctInFirstAppearanceOrder)
{
    const Flow flow = parse_flow(R"(a = z.Q({}); b = y.P({}); c = z.Q({});
        d = shared_teams.PostMessageToConversation({"bad": 1});
        e = shared_teams.PostMessageToConversation({"bad": 2, "worse": 3});)");
    const auto r = validate_flow(flow, teams_catalog());
    EXPECT_EQ(r.made_up_functions, (std::vector<std::string>{"z.Q", "y.P"}));
    EXPECT_EQ(r.made_up_parameters, (std::vector<MadeUpParameter>{{"shared_teams.PostMessageToConversation", "bad"},
                                                                   {"shared_teams.PostMessageToConversation", "worse"}}));
}

TEST(ValidateFlow, PropertiesOverSyntheticCorpus)
{
    const auto full = load_catalog(flowrag::testing::synthetic_catalog_json().dump());
    std::mt19937 rng(5);
    for (const auto& sample : flowrag::testing::synthetic_corpus(80)) {
        const Flow flow = parse_flow(sample.flow);
        EXPECT_TRUE(validate_flow(flow, full).clean()) << sample.id;

        // A random sub-catalog: made_up_functions is empty iff all names are present.
        ApiCatalog partial;
        for (const auto& [name, def] : full.definitions())
            if (rng() % 3)
                partial.add(def);
        const auto result = validate_flow(flow, partial);
        const auto names = extract_api_sequence(flow);
        const bool all_present =
            std::all_of(names.begin(), names.end(), [&](const auto& n) { return partial.contains(n); });
        EXPECT_EQ(result.made_up_functions.empty(), all_present);
        for (const auto& p : result.made_up_parameters)
            EXPECT_EQ(std::count(result.made_up_functions.begin(), result.made_up_functions.end(), p.function_name), 0);

        // Adding an unrelated definition never grows either list.
        ApiCatalog extended = partial;
        extended.add(FunctionDefinition{"unrelated_ns.Extra", "", "", false, false, {}, {}});
        const auto grown = validate_flow(flow, extended);
        EXPECT_LE(grown.made_up_functions.size(), result.made_up_functions.size());
        EXPECT_LE(grown.made_up_parameters.size(), result.made_up_parameters.size());
    }
}

TEST(ValidateFlow, NoArgumentsMeansNoMadeUpParameters)
{
    const auto r = validate_flow(parse_flow("a = x.A({}); if (a.ok) { b = y.B({}); }"), teams_catalog());
    EXPECT_TRUE(r.made_up_parameters.empty());
    EXPECT_EQ(r.made_up_functions.size(), 2u);
}

TEST(RenderFunctionDefinition, SendEmailBlock)
{
    const auto catalog = load_catalog(golden::kSendEmailCatalog);
    const std::string text = render_function_definition(*catalog.find("shared_outlook.SendEmailV2"));
    EXPECT_EQ(text,
              "shared_outlook.SendEmailV2\n"
              "This operation sends an email message.\n"
              "emailMessage/To (String): Specify email addresses separated by semicolons like "
              "someone@contoso.com");
}

TEST(RenderFunctionDefinition, ZeroParametersIsNameAndDescription)
{
    FunctionDefinition def;
    def.function_name = "shared_office365users.MyProfile_V2";
    def.description = "Retrieves the profile\n   for the current user.";
    EXPECT_EQ(render_function_definition(def),
              "shared_office365users.MyProfile_V2\nRetrieves the profile for the current user.");
}

TEST(RenderFunctionDefinition, DeterministicAcrossLoads)
{
    const auto doc = flowrag::testing::synthetic_catalog_json().dump();
    const auto a = load_catalog(doc);
    const auto b = load_catalog(doc);
    for (const auto& [name, def] : a.definitions())
        EXPECT_EQ(render_function_definition(def), render_function_definition(*b.find(name)));
}
