#include "see/gateway.h"

#include <thread>

#include <httplib.h>

#include "see/error.h"

namespace see {

namespace {

std::string_view ltrim(std::string_view s) {
  const auto pos = s.find_first_not_of(" \t\r\n\f\v");
  return pos == std::string_view::npos ? std::string_view{} : s.substr(pos);
}

using Clock = std::chrono::steady_clock;

std::chrono::microseconds since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0);
}

}  // namespace

Decision classify_head(std::string_view raw_output, const IndicatorConfig& indicators) {
  const auto head = ltrim(raw_output);
  // Neither indicator is a prefix of the other, so the test order is free.
  if (head.starts_with(indicators.positive))
    return Positive{std::string(ltrim(head.substr(indicators.positive.size())))};
  if (head.starts_with(indicators.negative)) return Negative{};
  return NoIndicator{std::string(raw_output)};
}

RoutingTrace route(const Registry& registry, const std::string& query, const RouteParams& params,
                   CompletionClient& experts, CompletionClient& base) {
  RoutingTrace trace;
  trace.query = query;
  bool to_base = true;

  for (const auto& expert : registry.routing_order()) {
    CompletionRequest req;
    req.model = expert.model_name;
    req.prompt = query;
    req.max_tokens = params.max_tokens;
    req.temperature = 0.0;
    req.stop = {expert.indicators.negative};

    Hop hop{expert.expert_id, Negative{}, std::nullopt, {}};
    const auto t0 = Clock::now();
    try {
      const auto result = experts.complete(expert.endpoint, req);
      hop.decision = classify_head(result.full_text(), expert.indicators);
    } catch (const TransportError& e) {
      if (params.on_expert_error == TransportPolicy::Strict)
        throw RouteError("expert " + expert.expert_id + " failed: " + e.what());
      hop.decision = NoIndicator{};
      hop.transport_error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    hop.elapsed = since(t0);
    trace.hops.push_back(std::move(hop));

    const auto& decision = trace.hops.back().decision;
    if (const auto* pos = std::get_if<Positive>(&decision)) {
      trace.handler_expert = expert.expert_id;
      trace.answer = pos->answer;
      to_base = false;
      break;
    }
    if (std::holds_alternative<NoIndicator>(decision)) break;
  }

  if (to_base) {
    CompletionRequest req;
    req.model = registry.base().model_name;
    req.prompt = query;
    req.max_tokens = params.max_tokens;
    req.temperature = 0.0;
    const auto t0 = Clock::now();
    try {
      trace.answer = base.complete(registry.base().endpoint, req).text;
    } catch (const TransportError& e) {
      throw RouteError(std::string("base model failed: ") + e.what());
    }
    trace.base_elapsed = since(t0);
  }
  return trace;
}

nlohmann::ordered_json decision_to_json(const Decision& decision) {
  nlohmann::ordered_json j;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Positive>) {
          j["decision"] = "positive";
          j["answer"] = d.answer;
        } else if constexpr (std::is_same_v<T, Negative>) {
          j["decision"] = "negative";
        } else {
          j["decision"] = "no_indicator";
          j["raw"] = d.raw;
        }
      },
      decision);
  return j;
}

nlohmann::ordered_json trace_to_json(const RoutingTrace& trace, bool include_timing) {
  nlohmann::ordered_json j;
  j["query"] = trace.query;
  j["handler"] = trace.handler_label();
  j["answer"] = trace.answer;
  auto hops = nlohmann::ordered_json::array();
  for (const auto& hop : trace.hops) {
    nlohmann::ordered_json h;
    h["expert_id"] = hop.expert_id;
    const auto decision = decision_to_json(hop.decision);
    for (const auto& [k, v] : decision.items()) h[k] = v;
    if (hop.transport_error) h["transport_error"] = *hop.transport_error;
    if (include_timing) h["elapsed_us"] = hop.elapsed.count();
    hops.push_back(std::move(h));
  }
  j["hops"] = std::move(hops);
  if (include_timing && trace.handled_by_base()) j["base_elapsed_us"] = trace.base_elapsed.count();
  return j;
}

GatewayConfig GatewayConfig::from_json(const nlohmann::json& j) {
  GatewayConfig c;
  if (!j.is_object()) throw ValidationError("gateway config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "listen") {
      const auto addr = value.get<std::string>();
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw ValidationError("listen must be host:port");
      c.host = addr.substr(0, colon);
      c.port = std::stoi(addr.substr(colon + 1));
    } else if (key == "registry") {
      c.registry_path = value.get<std::string>();
    } else if (key == "expert_timeout_ms") {
      c.expert_timeout = std::chrono::milliseconds(value.get<long>());
    } else if (key == "base_timeout_ms") {
      c.base_timeout = std::chrono::milliseconds(value.get<long>());
    } else if (key == "error_policy") {
      const auto p = value.get<std::string>();
      if (p == "fallback") c.on_expert_error = TransportPolicy::Fallback;
      else if (p == "strict") c.on_expert_error = TransportPolicy::Strict;
      else throw ValidationError("error_policy must be fallback or strict");
    } else if (key == "max_tokens") {
      c.default_max_tokens = value.get<int>();
    } else {
      throw ValidationError("unknown gateway config field '" + key + "'");
    }
  }
  return c;
}

struct GatewayServer::Impl {
  std::shared_ptr<RegistryHandle> registry;
  GatewayConfig config;
  std::shared_ptr<CompletionClient> experts;
  std::shared_ptr<CompletionClient> base;
  httplib::Server server;
  std::thread thread;

  static void send_error(httplib::Response& res, int status, const std::string& type,
                         const std::string& message) {
    nlohmann::json body = {{"error", {{"type", type}, {"message", message}}}};
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void handle_route(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "invalid_request", "body is not valid JSON");
    }
    const auto q = body.find("query");
    if (!body.is_object() || q == body.end() || !q->is_string())
      return send_error(res, 400, "invalid_request", "missing string field 'query'");

    RouteParams params;
    params.max_tokens = config.default_max_tokens;
    params.on_expert_error = config.on_expert_error;
    if (const auto mt = body.find("max_tokens"); mt != body.end()) {
      if (!mt->is_number_integer() || mt->get<int>() <= 0)
        return send_error(res, 400, "invalid_request", "max_tokens must be a positive integer");
      params.max_tokens = mt->get<int>();
    }
    bool want_trace = req.has_param("trace") && req.get_param_value("trace") == "1";
    if (const auto t = body.find("trace"); t != body.end()) {
      if (!t->is_boolean()) return send_error(res, 400, "invalid_request", "trace must be boolean");
      want_trace = want_trace || t->get<bool>();
    }

    const auto snapshot = registry->snapshot();
    try {
      const auto trace = route(*snapshot, q->get<std::string>(), params, *experts, *base);
      nlohmann::ordered_json out;
      out["answer"] = trace.answer;
      out["handler"] = trace.handler_label();
      if (want_trace) out["hops"] = trace_to_json(trace, true)["hops"];
      res.status = 200;
      res.set_content(out.dump(), "application/json");
    } catch (const RouteError& e) {
      send_error(res, 502, "upstream_error", e.what());
    }
  }
};

GatewayServer::GatewayServer(std::shared_ptr<RegistryHandle> registry, GatewayConfig config,
                             std::shared_ptr<CompletionClient> expert_client,
                             std::shared_ptr<CompletionClient> base_client)
    : impl_(std::make_unique<Impl>()) {
  impl_->registry = std::move(registry);
  impl_->config = std::move(config);
  impl_->experts = expert_client
                       ? std::move(expert_client)
                       : std::make_shared<HttpCompletionClient>(
                             HttpClientOptions{std::chrono::milliseconds(2000),
                                               impl_->config.expert_timeout});
  impl_->base = base_client ? std::move(base_client)
                            : std::make_shared<HttpCompletionClient>(HttpClientOptions{
                                  std::chrono::milliseconds(2000), impl_->config.base_timeout});

  impl_->server.Post("/v1/route", [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle_route(req, res);
  });
  impl_->server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  impl_->server.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
          if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          msg = e.what();
        }
        Impl::send_error(res, 500, "internal_error", msg);
      });
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::bind() {
  const auto& c = impl_->config;
  if (c.port == 0) {
    port_ = impl_->server.bind_to_any_port(c.host);
  } else {
    port_ = impl_->server.bind_to_port(c.host, c.port) ? c.port : -1;
  }
  if (port_ <= 0) throw Error("cannot bind " + c.host + ":" + std::to_string(c.port));
  return port_;
}

void GatewayServer::listen() { impl_->server.listen_after_bind(); }

void GatewayServer::start() {
  bind();
  impl_->thread = std::thread([this] { listen(); });
  impl_->server.wait_until_ready();
}

void GatewayServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace see
