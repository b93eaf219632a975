#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "see/completion_client.h"
#include "see/error.h"
#include "see/reconstruct.h"
#include "see/registry.h"

namespace see {

struct Positive {
  std::string answer;
  bool operator==(const Positive&) const = default;
};
struct Negative {
  bool operator==(const Negative&) const = default;
};
struct NoIndicator {
  std::string raw;
  bool operator==(const NoIndicator&) const = default;
};

using Decision = std::variant<Positive, Negative, NoIndicator>;

/// Exact prefix match after left-trim. A positive head yields the remainder,
/// itself left-trimmed.
Decision classify_head(std::string_view raw_output, const IndicatorConfig& indicators);

struct Hop {
  std::string expert_id;
  Decision decision;
  // Set when the expert could not be reached; decision is then NoIndicator.
  std::optional<std::string> transport_error;
  std::chrono::microseconds elapsed{0};
};

struct RoutingTrace {
  std::string query;
  std::vector<Hop> hops;
  std::optional<std::string> handler_expert;  // nullopt = base model
  std::string answer;
  std::chrono::microseconds base_elapsed{0};

  bool handled_by_base() const noexcept { return !handler_expert.has_value(); }
  std::string handler_label() const { return handler_expert.value_or("base"); }
};

enum class TransportPolicy { Fallback, Strict };

struct RouteParams {
  int max_tokens = 512;
  TransportPolicy on_expert_error = TransportPolicy::Fallback;
};

// Raised when routing cannot produce an answer: base unreachable, or an
// expert unreachable under the strict policy.
class RouteError : public Error {
 public:
  using Error::Error;
};

/// Walks the chain newest-first and stops at the first positive expert. A
/// missing indicator, or an exhausted chain, hands the raw query to the base
/// model.
RoutingTrace route(const Registry& registry, const std::string& query, const RouteParams& params,
                   CompletionClient& experts, CompletionClient& base);

inline RoutingTrace route(const Registry& registry, const std::string& query,
                          const RouteParams& params, CompletionClient& client) {
  return route(registry, query, params, client, client);
}

nlohmann::ordered_json decision_to_json(const Decision& decision);
nlohmann::ordered_json trace_to_json(const RoutingTrace& trace, bool include_timing);

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string registry_path;
  std::chrono::milliseconds expert_timeout{30000};
  std::chrono::milliseconds base_timeout{120000};
  TransportPolicy on_expert_error = TransportPolicy::Fallback;
  int default_max_tokens = 512;

  static GatewayConfig from_json(const nlohmann::json& j);
};

// POST /v1/route {query, max_tokens?, trace?} -> {answer, handler, hops?}.
// `?trace=1` on the URL also enables the trace.
class GatewayServer {
 public:
  // Without explicit clients, HTTP clients with the configured timeouts are
  // used.
  GatewayServer(std::shared_ptr<RegistryHandle> registry, GatewayConfig config,
                std::shared_ptr<CompletionClient> expert_client = nullptr,
                std::shared_ptr<CompletionClient> base_client = nullptr);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  // Binds the configured address (port 0 picks a free one) and returns the
  // bound port. Throws Error on bind failure.
  int bind();
  // Blocks until stop().
  void listen();
  void start();  // bind + listen on a background thread
  void stop();

  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace see
