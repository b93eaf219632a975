#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "see/completion_client.h"
#include "see/gateway.h"
#include "see/reconstruct.h"

namespace see {

// Deterministic stand-in for a trained expert (or the base model) that
// speaks the completion protocol. Behaviour per query depends only on
// (seed, key), never on call order.
struct ExpertProfile {
  enum class Role { Expert, Base };

  std::string expert_id;
  std::string model_name;  // defaults to expert_id
  Role role = Role::Expert;
  std::string own_task;
  IndicatorConfig indicators = IndicatorConfig::preset(IndicatorKind::AdditionalToken);
  // P(Positive | true task); tasks not listed use 0.
  std::map<std::string, double> recognition;
  // Expected ROUGE-L of the answer per true task; tasks not listed use 0.
  std::map<std::string, double> answer_quality;
  double no_indicator_rate = 0.0;
  std::uint64_t seed = 0;

  double recognition_for(const std::string& task) const;
  double quality_for(const std::string& task) const;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ExpertProfile from_json(const nlohmann::json& j);

  // Always claims own-task queries and answers them perfectly; declines the rest.
  static ExpertProfile perfect(std::string expert_id, std::string task, IndicatorConfig indicators,
                               std::uint64_t seed = 0);
};

std::vector<ExpertProfile> load_profiles(const std::filesystem::path& path);

// Harness-side labels for a synthetic query. Real experts never see these.
struct SyntheticQuery {
  std::string query;
  std::string true_task;
  std::string key;
  std::optional<std::string> reference;
};

// Prepends the label header line to the query text.
std::string synthetic_prompt(const SyntheticQuery& labelled);

// Splits a prompt into labels and query. Prompts without a header come back
// with an empty true_task and the whole prompt as key.
SyntheticQuery parse_synthetic_prompt(const std::string& prompt);

/// Answer text whose ROUGE-L against `reference` is exactly round(q*L)/L,
/// L = number of reference tokens. Without a reference the tokens are derived
/// from the key.
std::string synthetic_answer(const SyntheticQuery& labelled, double quality,
                             std::size_t max_tokens = 0);

Decision simulate_decision(const ExpertProfile& profile, const SyntheticQuery& labelled);

/// The text a profile returns for a completion request, following the stop
/// semantics of the protocol (a matched stop string is reported, not emitted).
CompletionResult simulate_completion(const ExpertProfile& profile, const CompletionRequest& request);

// In-process fleet, dispatching on the request's model name.
class SyntheticFleet final : public CompletionClient {
 public:
  explicit SyntheticFleet(std::vector<ExpertProfile> profiles);

  CompletionResult complete(const std::string& endpoint, const CompletionRequest& request) override;

  const ExpertProfile* find(const std::string& model_name) const;
  const std::vector<ExpertProfile>& profiles() const noexcept { return profiles_; }

 private:
  std::vector<ExpertProfile> profiles_;
  std::map<std::string, std::size_t> by_model_;
};

// HTTP host for a fleet: POST /v1/completions (model-name multiplexed),
// GET /v1/models.
class SyntheticServer {
 public:
  SyntheticServer(std::vector<ExpertProfile> profiles, std::string host, int port);
  ~SyntheticServer();

  SyntheticServer(const SyntheticServer&) = delete;
  SyntheticServer& operator=(const SyntheticServer&) = delete;

  int bind();
  void listen();
  void start();
  void stop();

  int port() const noexcept { return port_; }
  std::string endpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_;
};

// Toy dataset with deterministic queries and references, for demos and tests.
TaskDataset generate_synthetic_task(const std::string& task_id, Split split, std::size_t count,
                                    std::size_t reference_tokens, std::uint64_t seed);

}  // namespace see
