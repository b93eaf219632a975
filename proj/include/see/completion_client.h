#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace see {

// Body of POST {endpoint}/v1/completions.
struct CompletionRequest {
  std::string model;
  std::string prompt;
  int max_tokens = 512;
  double temperature = 0.0;
  std::vector<std::string> stop;
};

struct CompletionResult {
  std::string text;
  // The stop sequence that ended generation, when the backend reports it
  // (`stop_reason` as a string). The text itself never contains it.
  std::optional<std::string> matched_stop;

  // Generated text with the matched stop sequence re-appended.
  std::string full_text() const { return matched_stop ? text + *matched_stop : text; }
};

// Anything that can answer a completion request for (endpoint, model).
// Implementations throw TransportError on failure and must be safe to call
// from several threads at once.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual CompletionResult complete(const std::string& endpoint, const CompletionRequest& request) = 0;
};

struct HttpClientOptions {
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{30000};
};

// Speaks the OpenAI-style completion protocol over HTTP; reads
// choices[0].text and choices[0].stop_reason.
class HttpCompletionClient final : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientOptions options = {}) : options_(options) {}

  CompletionResult complete(const std::string& endpoint, const CompletionRequest& request) override;

 private:
  HttpClientOptions options_;
};

}  // namespace see
