#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "see/completion_client.h"
#include "see/corpus.h"
#include "see/gateway.h"
#include "see/metrics.h"
#include "see/reconstruct.h"
#include "see/registry.h"
#include "see/synth_expert.h"

namespace see {

struct TaskEntry {
  std::string task_id;
  std::filesystem::path train;
  std::filesystem::path eval;
};

// How each stage's synthetic expert behaves, as a function of the stage's
// position and the rehearsal fraction tau. Probabilities are clamped to [0,1].
struct SyntheticTemplate {
  double own_recognition = 1.0;
  double own_recognition_per_tau = 0.0;
  // Claims on queries of tasks learned before this expert.
  double previous_recognition = 0.0;
  double previous_recognition_per_tau = 0.0;
  // Claims on later tasks and on OOD queries.
  double other_recognition = 0.0;
  std::map<std::string, double> quality;  // own-task answer quality per task
  double default_quality = 1.0;
  double cross_quality = 0.0;             // quality when answering another task
  double no_indicator_rate = 0.0;
  std::map<std::string, double> base_quality;
  double base_default_quality = 0.0;
  bool serve_over_http = false;
};

// Trains experts out of process. The command runs through the shell with
// {dataset}, {manifest}, {stage_dir}, {stage} and {task_id} substituted and
// must leave an ExpertSpec stub at {stage_dir}/expert.json.
struct ExternalBackend {
  std::string trainer_command;
  BaseModel base;
  std::chrono::milliseconds expert_timeout{30000};
  std::chrono::milliseconds base_timeout{120000};
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::vector<TaskEntry> tasks;
  double tau = 0.1;
  std::uint64_t seed = 0;
  IndicatorConfig indicators = IndicatorConfig::preset(IndicatorKind::AdditionalToken);
  std::variant<SyntheticTemplate, ExternalBackend> backend = SyntheticTemplate{};
  // Replaces rehearsal negatives with an equal number of external queries.
  std::optional<std::filesystem::path> pseudo_negative_corpus;
  std::optional<std::filesystem::path> ood_eval;
  std::size_t eval_concurrency = 4;
  int max_tokens = 512;
  std::filesystem::path output_dir = "out";

  // Relative paths resolve against `base_dir`.
  static ScenarioConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ScenarioConfig load(const std::filesystem::path& path);
  void validate() const;
};

inline constexpr std::string_view kOodTask = "__ood__";

ExpertProfile synthetic_profile_for_stage(const ScenarioConfig& config,
                                          const SyntheticTemplate& tmpl, std::size_t stage);
ExpertProfile synthetic_base_profile(const ScenarioConfig& config, const SyntheticTemplate& tmpl);

struct EvalOptions {
  // Prepend synthetic labels (task, key, reference) to each query.
  bool synthetic_labels = false;
  int max_tokens = 512;
  std::size_t concurrency = 1;
  TransportPolicy on_expert_error = TransportPolicy::Fallback;
};

struct TaskEvaluation {
  std::string task_id;
  std::vector<RoutingTrace> traces;
  std::vector<double> scores;  // per instance, [0,1]
  double score = 0.0;          // [0,100]
};

struct StageEvaluation {
  std::vector<TaskEvaluation> tasks;

  std::vector<double> row() const;
  std::vector<RoutingTrace> all_traces() const;
  std::vector<std::string> truth() const;
};

/// Routes every eval instance through the full chain and scores the answer
/// with ROUGE-L against its reference.
StageEvaluation evaluate_stage(const Registry& registry, const std::vector<TaskDataset>& eval_sets,
                               const EvalOptions& options, CompletionClient& experts,
                               CompletionClient& base);

// Routes OOD queries (responses ignored) and returns their traces.
std::vector<RoutingTrace> route_ood(const Registry& registry, const TaskDataset& ood,
                                    const EvalOptions& options, CompletionClient& experts,
                                    CompletionClient& base);

void write_traces(const StageEvaluation& evaluation, const std::filesystem::path& path);

struct ScenarioResult {
  ScoreMatrix matrix{0};
  Registry registry{BaseModel{}};
  nlohmann::ordered_json report;
};

/// Stage loop: reconstruct, produce an expert, register it, evaluate every
/// task seen so far. Artifacts land in config.output_dir:
///   stage-<i>/reconstructed.jsonl (+ .manifest.json), registry.json,
///   traces.jsonl; then score_matrix.json, report.json, registry.json.
/// A failing stage throws StageError; earlier artifacts stay on disk.
ScenarioResult run_sequence(const ScenarioConfig& config);

class StageError : public Error {
 public:
  StageError(std::size_t stage, const std::string& what)
      : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

}  // namespace see
