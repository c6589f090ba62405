#pragma once

#include <string_view>

namespace flowrag::testing {

// Forms trigger posting to Teams: ground truth and a model prediction that
// inserts an extra profile lookup and an additional parameter key.
inline constexpr std::string_view kFormsQuery =
    "Post a message in the channel of teams, when a new form is created in the forms";

inline constexpr std::string_view kFormsTruth =
    "triggerOutputs = await shared_microsoftforms.CreateFormWebhook({}); "
    "outputs_shared_teams_PostMessageToConversation = "
    "shared_teams.PostMessageToConversation({ \"poster\": \"User\" });";

inline constexpr std::string_view kFormsPrediction =
    "triggerOutputs = \nawait shared_microsoftforms.\nCreateFormWebhook({});\n"
    "outputs_Get_my_profile_V2 =  \nshared_office365users.MyProfile_V2({}); \n"
    "outputs_shared_teams_PostMessage\n= shared_teams.PostMessageToConversation(\n"
    "{\"poster\": \"User\",\"location\": \n\"Channel\"});";

inline constexpr std::string_view kSendEmailCatalog = R"json({
  "shared_outlook.SendEmailV2": {
    "FunctionName": "shared_outlook.SendEmailV2",
    "Description": "This operation sends an email message.",
    "IsInTrainingSet": false,
    "DisplayName": "Send an email (V2)",
    "ParametersInfo": [
      {
        "Key": "emailMessage/To",
        "Type": "String",
        "Summary": "To",
        "Format": "email",
        "Description": "Specify email addresses separated by semicolons like someone@contoso.com"
      }
    ],
    "ResponseSchema": [],
    "IsTrigger": false
  }
})json";

// Catalog covering every function used by the forms example.
inline constexpr std::string_view kFormsCatalog = R"json({
  "shared_microsoftforms.CreateFormWebhook": {
    "FunctionName": "shared_microsoftforms.CreateFormWebhook",
    "Description": "Triggers when a new response is submitted to a form.",
    "IsInTrainingSet": true,
    "DisplayName": "When a new response is submitted",
    "ParametersInfo": [],
    "ResponseSchema": [],
    "IsTrigger": true
  },
  "shared_teams.PostMessageToConversation": {
    "FunctionName": "shared_teams.PostMessageToConversation",
    "Description": "Posts a message to a chat or a channel.",
    "IsInTrainingSet": true,
    "DisplayName": "Post message in a chat or channel",
    "ParametersInfo": [
      {"Key": "poster", "Type": "String", "Summary": "Post as", "Description": "Select an option"},
      {"Key": "location", "Type": "String", "Summary": "Post in", "Description": "Select an option"}
    ],
    "ResponseSchema": [],
    "IsTrigger": false
  },
  "shared_office365users.MyProfile_V2": {
    "FunctionName": "shared_office365users.MyProfile_V2",
    "Description": "Retrieves the profile for the current user.",
    "IsInTrainingSet": true,
    "DisplayName": "Get my profile (V2)",
    "ParametersInfo": [],
    "ResponseSchema": [],
    "IsTrigger": false
  }
})json";

} // namespace flowrag::testing
