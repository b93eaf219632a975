#include "see/synth_expert.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "see/error.h"
#include "see/hashing.h"

namespace see {

namespace {

constexpr std::string_view kHeaderTag = "#synth ";
constexpr std::size_t kKeyDerivedTokens = 12;

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(std::move(tok));
  return out;
}

std::string hex_token(std::string_view prefix, std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h & 0xffffffffULL));
  return std::string(prefix) + buf;
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(what + " must be within [0, 1]");
}

double lookup(const std::map<std::string, double>& m, const std::string& key) {
  const auto it = m.find(key);
  return it == m.end() ? 0.0 : it->second;
}

}  // namespace

double ExpertProfile::recognition_for(const std::string& task) const {
  return lookup(recognition, task);
}

double ExpertProfile::quality_for(const std::string& task) const {
  return lookup(answer_quality, task);
}

void ExpertProfile::validate() const {
  if (expert_id.empty()) throw ValidationError("profile without expert_id");
  const std::string who = "profile " + expert_id;
  for (const auto& [task, p] : recognition) check_probability(p, who + " recognition[" + task + "]");
  for (const auto& [task, q] : answer_quality) check_probability(q, who + " answer_quality[" + task + "]");
  check_probability(no_indicator_rate, who + " no_indicator_rate");
  if (role == Role::Expert) indicators.validate();
}

nlohmann::ordered_json ExpertProfile::to_json() const {
  nlohmann::ordered_json j;
  j["expert_id"] = expert_id;
  j["model_name"] = model_name.empty() ? expert_id : model_name;
  j["role"] = role == Role::Base ? "base" : "expert";
  j["own_task"] = own_task;
  j["indicators"] = indicators.to_json();
  j["recognition"] = recognition;
  j["answer_quality"] = answer_quality;
  j["no_indicator_rate"] = no_indicator_rate;
  j["seed"] = seed;
  return j;
}

ExpertProfile ExpertProfile::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("profile must be an object");
  ExpertProfile p;
  try {
    p.expert_id = j.at("expert_id").get<std::string>();
    p.model_name = j.value("model_name", p.expert_id);
    const auto role = j.value("role", std::string("expert"));
    if (role == "base") p.role = Role::Base;
    else if (role != "expert") throw ValidationError("profile " + p.expert_id + ": unknown role " + role);
    p.own_task = j.value("own_task", std::string());
    if (const auto ind = j.find("indicators"); ind != j.end())
      p.indicators = IndicatorConfig::from_json(*ind);
    if (const auto r = j.find("recognition"); r != j.end())
      p.recognition = r->get<std::map<std::string, double>>();
    if (const auto q = j.find("answer_quality"); q != j.end())
      p.answer_quality = q->get<std::map<std::string, double>>();
    p.no_indicator_rate = j.value("no_indicator_rate", 0.0);
    p.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid profile: ") + e.what());
  }
  p.validate();
  return p;
}

ExpertProfile ExpertProfile::perfect(std::string expert_id, std::string task,
                                     IndicatorConfig indicators, std::uint64_t seed) {
  ExpertProfile p;
  p.expert_id = expert_id;
  p.model_name = std::move(expert_id);
  p.own_task = task;
  p.indicators = std::move(indicators);
  p.recognition[task] = 1.0;
  p.answer_quality[task] = 1.0;
  p.seed = seed;
  return p;
}

std::vector<ExpertProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open profiles " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed profiles " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ValidationError("profile file must hold a JSON list");
  std::vector<ExpertProfile> out;
  for (const auto& p : j) out.push_back(ExpertProfile::from_json(p));
  return out;
}

std::string synthetic_prompt(const SyntheticQuery& labelled) {
  nlohmann::ordered_json h;
  h["task"] = labelled.true_task;
  h["key"] = labelled.key;
  if (labelled.reference) h["reference"] = *labelled.reference;
  return std::string(kHeaderTag) + h.dump() + "\n" + labelled.query;
}

SyntheticQuery parse_synthetic_prompt(const std::string& prompt) {
  SyntheticQuery out;
  if (prompt.starts_with(kHeaderTag)) {
    const auto nl = prompt.find('\n');
    const auto header = prompt.substr(kHeaderTag.size(), nl == std::string::npos
                                                             ? std::string::npos
                                                             : nl - kHeaderTag.size());
    const auto j = nlohmann::json::parse(header, nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      out.true_task = j.value("task", std::string());
      out.key = j.value("key", std::string());
      if (const auto r = j.find("reference"); r != j.end() && r->is_string())
        out.reference = r->get<std::string>();
      out.query = nl == std::string::npos ? std::string() : prompt.substr(nl + 1);
      if (out.key.empty()) out.key = out.query;
      return out;
    }
  }
  out.query = prompt;
  out.key = prompt;
  return out;
}

std::string synthetic_answer(const SyntheticQuery& labelled, double quality,
                             std::size_t max_tokens) {
  std::vector<std::string> reference;
  if (labelled.reference) {
    reference = split_ws(*labelled.reference);
  } else {
    for (std::size_t i = 0; i < kKeyDerivedTokens; ++i)
      reference.push_back(hex_token("w", mix_seed(fnv1a64(labelled.key), i)));
  }
  const auto length = reference.size();
  const auto kept = static_cast<std::size_t>(std::llround(quality * static_cast<double>(length)));
  std::vector<std::string> tokens(reference.begin(), reference.begin() + std::min(kept, length));
  // Filler tokens never occur in references, so LCS is exactly `kept`.
  for (std::size_t i = tokens.size(); i < length; ++i) tokens.push_back("<fill-" + std::to_string(i) + ">");
  if (max_tokens > 0 && tokens.size() > max_tokens) tokens.resize(max_tokens);

  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Decision simulate_decision(const ExpertProfile& profile, const SyntheticQuery& labelled) {
  const auto quality = profile.quality_for(labelled.true_task);
  if (keyed_uniform(profile.seed, labelled.key, "no-indicator") < profile.no_indicator_rate)
    return NoIndicator{"(unsure) " + synthetic_answer(labelled, quality)};
  if (keyed_uniform(profile.seed, labelled.key, "recognition") <
      profile.recognition_for(labelled.true_task))
    return Positive{synthetic_answer(labelled, quality)};
  return Negative{};
}

CompletionResult simulate_completion(const ExpertProfile& profile,
                                     const CompletionRequest& request) {
  const auto labelled = parse_synthetic_prompt(request.prompt);
  const auto budget = static_cast<std::size_t>(std::max(request.max_tokens, 0));
  if (profile.role == ExpertProfile::Role::Base) {
    // An unlabelled prompt gets an empty answer from the synthetic base.
    if (labelled.true_task.empty()) return {"", std::nullopt};
    return {synthetic_answer(labelled, profile.quality_for(labelled.true_task), budget),
            std::nullopt};
  }

  const auto decision = simulate_decision(profile, labelled);
  if (std::holds_alternative<Positive>(decision)) {
    auto answer = synthetic_answer(labelled, profile.quality_for(labelled.true_task),
                                   budget > 0 ? budget - 1 : 0);
    return {profile.indicators.positive + " " + answer, std::nullopt};
  }
  if (std::holds_alternative<Negative>(decision)) {
    const auto& neg = profile.indicators.negative;
    if (std::find(request.stop.begin(), request.stop.end(), neg) != request.stop.end())
      return {"", neg};
    return {neg, std::nullopt};
  }
  return {std::get<NoIndicator>(decision).raw, std::nullopt};
}

SyntheticFleet::SyntheticFleet(std::vector<ExpertProfile> profiles)
    : profiles_(std::move(profiles)) {
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    auto& p = profiles_[i];
    if (p.model_name.empty()) p.model_name = p.expert_id;
    p.validate();
    if (!by_model_.emplace(p.model_name, i).second)
      throw ValidationError("duplicate synthetic model '" + p.model_name + "'");
  }
}

const ExpertProfile* SyntheticFleet::find(const std::string& model_name) const {
  const auto it = by_model_.find(model_name);
  return it == by_model_.end() ? nullptr : &profiles_[it->second];
}

CompletionResult SyntheticFleet::complete(const std::string& endpoint,
                                          const CompletionRequest& request) {
  const auto* profile = find(request.model);
  if (!profile)
    throw TransportError(TransportError::Kind::Status, request.model + "@" + endpoint,
                         "HTTP 404: unknown model");
  return simulate_completion(*profile, request);
}

struct SyntheticServer::Impl {
  SyntheticFleet fleet;
  httplib::Server server;
  std::thread thread;

  explicit Impl(std::vector<ExpertProfile> profiles) : fleet(std::move(profiles)) {}

  static void send_error(httplib::Response& res, int status, const std::string& type,
                         const std::string& message) {
    nlohmann::json body = {{"error", {{"type", type}, {"message", message}}}};
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object())
      return send_error(res, 400, "invalid_request_error", "body is not a JSON object");
    CompletionRequest cr;
    try {
      cr.model = body.at("model").get<std::string>();
      cr.prompt = body.at("prompt").get<std::string>();
      cr.max_tokens = body.value("max_tokens", 512);
      cr.temperature = body.value("temperature", 0.0);
      if (const auto stop = body.find("stop"); stop != body.end()) {
        if (stop->is_string()) cr.stop = {stop->get<std::string>()};
        else if (stop->is_array()) cr.stop = stop->get<std::vector<std::string>>();
      }
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 400, "invalid_request_error", e.what());
    }
    const auto* profile = fleet.find(cr.model);
    if (!profile) return send_error(res, 404, "model_not_found", "unknown model " + cr.model);

    const auto result = simulate_completion(*profile, cr);
    nlohmann::ordered_json choice;
    choice["index"] = 0;
    choice["text"] = result.text;
    choice["finish_reason"] = "stop";
    choice["stop_reason"] = result.matched_stop ? nlohmann::ordered_json(*result.matched_stop)
                                                : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json out;
    out["id"] = "cmpl-" + hex_token("", fnv1a64(cr.model + "\n" + cr.prompt));
    out["object"] = "text_completion";
    out["model"] = cr.model;
    out["choices"] = nlohmann::ordered_json::array({choice});
    res.set_content(out.dump(), "application/json");
  }
};

SyntheticServer::SyntheticServer(std::vector<ExpertProfile> profiles, std::string host, int port)
    : impl_(std::make_unique<Impl>(std::move(profiles))), host_(std::move(host)), port_(port) {
  impl_->server.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle(req, res);
  });
  impl_->server.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
    nlohmann::ordered_json out;
    out["object"] = "list";
    out["data"] = nlohmann::ordered_json::array();
    for (const auto& p : impl_->fleet.profiles())
      out["data"].push_back({{"id", p.model_name}, {"object", "model"}});
    res.set_content(out.dump(), "application/json");
  });
}

SyntheticServer::~SyntheticServer() { stop(); }

int SyntheticServer::bind() {
  const int requested = port_;
  if (requested == 0) port_ = impl_->server.bind_to_any_port(host_);
  else port_ = impl_->server.bind_to_port(host_, requested) ? requested : -1;
  if (port_ <= 0) throw Error("cannot bind " + host_ + ":" + std::to_string(requested));
  return port_;
}

void SyntheticServer::listen() { impl_->server.listen_after_bind(); }

void SyntheticServer::start() {
  bind();
  impl_->thread = std::thread([this] { listen(); });
  impl_->server.wait_until_ready();
}

void SyntheticServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string SyntheticServer::endpoint() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

TaskDataset generate_synthetic_task(const std::string& task_id, Split split, std::size_t count,
                                    std::size_t reference_tokens, std::uint64_t seed) {
  TaskDataset ds{task_id, {}, split};
  const auto base = mix_seed(mix_seed(seed, task_id), std::string_view(to_string(split)));
  for (std::size_t i = 0; i < count; ++i) {
    const auto h = mix_seed(base, static_cast<std::uint64_t>(i));
    Instance inst;
    inst.query = "[" + task_id + "] " + hex_token("q", h) + " " + hex_token("q", splitmix64(h));
    for (std::size_t t = 0; t < reference_tokens; ++t) {
      if (!inst.response.empty()) inst.response += ' ';
      inst.response += hex_token(task_id.empty() ? "r" : task_id.substr(0, 1), mix_seed(h, t));
    }
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace see
