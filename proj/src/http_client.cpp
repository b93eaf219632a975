#include <chrono>

#include <httplib.h>
#include <json.hpp>

#include "see/completion_client.h"
#include "see/error.h"

namespace see {

CompletionResult HttpCompletionClient::complete(const std::string& endpoint,
                                           const CompletionRequest& request) {
  const std::string target = request.model + "@" + endpoint;
  httplib::Client client(endpoint);
  if (!client.is_valid())
    throw TransportError(TransportError::Kind::Connection, target, "invalid endpoint URL");
  const auto ct = options_.connect_timeout.count();
  const auto rt = options_.read_timeout.count();
  client.set_connection_timeout(ct / 1000, (ct % 1000) * 1000);
  client.set_read_timeout(rt / 1000, (rt % 1000) * 1000);
  client.set_write_timeout(rt / 1000, (rt % 1000) * 1000);

  nlohmann::json body = {{"model", request.model},
                         {"prompt", request.prompt},
                         {"max_tokens", request.max_tokens},
                         {"temperature", request.temperature},
                         {"stop", request.stop}};
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post("/v1/completions", body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && elapsed >= options_.read_timeout);
    if (timed_out)
      throw TransportError(TransportError::Kind::Timeout, target,
                           "timed out after " + std::to_string(rt) + " ms");
    throw TransportError(TransportError::Kind::Connection, target, httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300)
    throw TransportError(TransportError::Kind::Status, target,
                         "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto& choice = j.at("choices").at(0);
    CompletionResult result{choice.at("text").get<std::string>(), std::nullopt};
    if (const auto sr = choice.find("stop_reason"); sr != choice.end() && sr->is_string())
      result.matched_stop = sr->get<std::string>();
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(TransportError::Kind::Protocol, target,
                         std::string("bad completion body: ") + e.what());
  }
}

}  // namespace see
