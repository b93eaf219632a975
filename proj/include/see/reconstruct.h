#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "see/corpus.h"

namespace see {

enum class IndicatorKind { AdditionalToken, NonSemantic, Semantic };

const char* to_string(IndicatorKind kind);
IndicatorKind parse_indicator_kind(const std::string& text);

// The leading strings an expert emits to claim (positive) or decline
// (negative) a query.
struct IndicatorConfig {
  std::string positive;
  std::string negative;
  IndicatorKind kind = IndicatorKind::AdditionalToken;

  // Default strings for each kind: "<|pos|>"/"<|neg|>", "<<pos>>"/"<<neg>>",
  // "Yes"/"No".
  static IndicatorConfig preset(IndicatorKind kind);

  // Throws ValidationError if either string is empty, they are equal, or one
  // is a prefix of the other.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static IndicatorConfig from_json(const nlohmann::json& j);

  bool operator==(const IndicatorConfig&) const = default;
};

enum class Polarity { Positive, Negative };

struct ReconstructedSample {
  std::string query;
  Polarity indicator = Polarity::Positive;
  std::optional<std::string> response;  // present iff positive
  std::string origin_task;

  bool operator==(const ReconstructedSample&) const = default;
};

struct ReconstructedDataset {
  std::string task_id;
  std::vector<ReconstructedSample> samples;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  IndicatorConfig indicators;
};

struct RehearsalQuery {
  std::string query;
  std::string origin_task;

  bool operator==(const RehearsalQuery&) const = default;
};

// floor(tau * size); exact for tau = 0 and never exceeds size.
std::size_t rehearsal_count(std::size_t size, double tau);

/// Draws floor(tau * |D_j|) distinct queries from every previous task, each
/// task with its own generator seeded by (seed, task position). Output is
/// grouped by task in history order. Throws ValidationError for tau outside
/// [0, 1].
std::vector<RehearsalQuery> sample_rehearsal(const std::vector<TaskDataset>& history, double tau,
                                             std::uint64_t seed);

/// Positives from `current`, rehearsal negatives from `history`, shuffled
/// together with a generator derived from `seed`.
ReconstructedDataset reconstruct_task(const TaskDataset& current,
                                      const std::vector<TaskDataset>& history, double tau,
                                      const IndicatorConfig& indicators, std::uint64_t seed);

/// Same shape as reconstruct_task, but the `count` negatives come from an
/// unrelated external corpus instead of previous tasks.
ReconstructedDataset make_pseudo_negative(const TaskDataset& current, const TaskDataset& external,
                                          std::size_t count, const IndicatorConfig& indicators,
                                          std::uint64_t seed);

// `<stem>.manifest.json` next to the dataset file.
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

nlohmann::ordered_json manifest_json(const ReconstructedDataset& dataset);

// Writes the JSONL records and the sidecar manifest.
void write_reconstructed(const ReconstructedDataset& dataset, const std::filesystem::path& path);

// Inverse of write_reconstructed; validates counts against the manifest.
ReconstructedDataset read_reconstructed(const std::filesystem::path& path);

}  // namespace see
