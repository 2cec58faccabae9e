#include "ariel/llm.hpp"

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

namespace ariel::llm {

namespace {

struct ParsedUrl {
  std::string scheme_host;  // "http://host:port"
  std::string path;
};

ParsedUrl split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError("endpoint '" + endpoint + "' has no scheme");
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {endpoint, "/v1/chat/completions"};
  }
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::string HttpProvider::complete(const std::string& prompt) {
  const ParsedUrl url = split_endpoint(config_.endpoint);

  httplib::Client client(url.scheme_host);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);

  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  const nlohmann::json body{
      {"model", config_.model_id},
      {"messages", nlohmann::json::array({nlohmann::json{
                       {"role", "user"}, {"content", prompt}}})},
      {"temperature", config_.temperature},
  };

  auto result = client.Post(url.path, headers, body.dump(), "application/json");
  if (!result) {
    throw ProviderError("transport error: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw ProviderError("endpoint returned status " +
                        std::to_string(result->status));
  }
  nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
  if (reply.is_discarded()) {
    throw ProviderError("endpoint returned non-JSON body");
  }
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError("endpoint reply missing choices[0].message.content");
  }
}

}  // namespace ariel::llm
