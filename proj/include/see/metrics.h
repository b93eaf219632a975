#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "see/gateway.h"

namespace see {

// Lowercased, whitespace-delimited tokens.
std::vector<std::string> rouge_tokens(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L F-measure (beta = 1) in [0, 1]. No stemming.
double rouge_l(std::string_view candidate, std::string_view reference);

// Mean of per-instance scores in [0,1], scaled to [0,100].
double average_rouge(std::span<const double> per_instance);

// Lower-triangular matrix a[i][j] (stage i, task j, both 0-based, j <= i)
// on the 0-100 scale.
class ScoreMatrix {
 public:
  explicit ScoreMatrix(std::size_t tasks);

  std::size_t tasks() const noexcept { return rows_.size(); }
  void set(std::size_t stage, std::size_t task, double score);
  std::optional<double> get(std::size_t stage, std::size_t task) const;
  double at(std::size_t stage, std::size_t task) const;  // throws if missing
  void set_row(std::size_t stage, std::span<const double> scores);

  nlohmann::ordered_json to_json() const;
  static ScoreMatrix from_json(const nlohmann::json& j);

  bool operator==(const ScoreMatrix&) const = default;

 private:
  std::vector<std::vector<std::optional<double>>> rows_;
};

// (1/T) * sum_i a[T][i].
double average_rouge_l_final(const ScoreMatrix& m);
inline double ar(const ScoreMatrix& m) { return average_rouge_l_final(m); }

// (1/(T-1)) * sum_{i<T} (a[T][i] - a[i][i]); throws for T < 2.
double backward_transfer(const ScoreMatrix& m);
inline double bwt(const ScoreMatrix& m) { return backward_transfer(m); }

struct RoutingF1 {
  std::map<std::string, double> per_task;  // expert tasks plus "base"
  double macro = 0.0;                      // over expert tasks only
};

inline constexpr std::string_view kBaseLabel = "base";

/// One-vs-rest F1 over predicted labels (handler's task, or "base") against
/// true labels. `expert_tasks` lists the classes that enter the macro mean;
/// when empty, every non-base label seen in truth or predictions is used.
RoutingF1 routing_f1(std::span<const std::string> predicted, std::span<const std::string> truth,
                     std::span<const std::string> expert_tasks = {});

// Maps each trace's handler to its task via the registry.
std::vector<std::string> handler_tasks(std::span<const RoutingTrace> traces,
                                       const Registry& registry);

RoutingF1 routing_f1(std::span<const RoutingTrace> traces, std::span<const std::string> truth,
                     const Registry& registry);

// Fraction of traces answered by the base model.
double rb_acc(std::span<const RoutingTrace> traces);

std::map<std::string, std::size_t> handler_counts(std::span<const RoutingTrace> traces);

}  // namespace see
