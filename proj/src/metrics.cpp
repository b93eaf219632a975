#include "see/metrics.h"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>

#include "see/error.h"

namespace see {

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Rolling single row over the shorter sequence.
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row.back();
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(cand, ref));
  const double p = lcs / static_cast<double>(cand.size());
  const double r = lcs / static_cast<double>(ref.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double average_rouge(std::span<const double> per_instance) {
  if (per_instance.empty()) throw ValidationError("average_rouge: no scores");
  const double sum = std::accumulate(per_instance.begin(), per_instance.end(), 0.0);
  return 100.0 * sum / static_cast<double>(per_instance.size());
}

ScoreMatrix::ScoreMatrix(std::size_t tasks) : rows_(tasks) {
  for (std::size_t i = 0; i < tasks; ++i) rows_[i].resize(i + 1);
}

void ScoreMatrix::set(std::size_t stage, std::size_t task, double score) {
  if (stage >= rows_.size() || task > stage)
    throw std::out_of_range("ScoreMatrix::set: entry outside the lower triangle");
  rows_[stage][task] = score;
}

std::optional<double> ScoreMatrix::get(std::size_t stage, std::size_t task) const {
  if (stage >= rows_.size() || task > stage) return std::nullopt;
  return rows_[stage][task];
}

double ScoreMatrix::at(std::size_t stage, std::size_t task) const {
  const auto v = get(stage, task);
  if (!v)
    throw ValidationError("score matrix: missing entry for stage " + std::to_string(stage + 1) +
                          ", task " + std::to_string(task + 1));
  return *v;
}

void ScoreMatrix::set_row(std::size_t stage, std::span<const double> scores) {
  if (stage >= rows_.size() || scores.size() != stage + 1)
    throw std::out_of_range("ScoreMatrix::set_row: row length must equal stage + 1");
  for (std::size_t j = 0; j < scores.size(); ++j) rows_[stage][j] = scores[j];
}

nlohmann::ordered_json ScoreMatrix::to_json() const {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : rows_) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& v : row) r.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json());
    rows.push_back(std::move(r));
  }
  return rows;
}

ScoreMatrix ScoreMatrix::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("score matrix must be an array of rows");
  ScoreMatrix m(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != i + 1)
      throw ValidationError("score matrix row " + std::to_string(i + 1) + " has wrong length");
    for (std::size_t k = 0; k <= i; ++k)
      if (!j[i][k].is_null()) m.set(i, k, j[i][k].get<double>());
  }
  return m;
}

double average_rouge_l_final(const ScoreMatrix& m) {
  const auto t = m.tasks();
  if (t == 0) throw ValidationError("AR: empty score matrix");
  double sum = 0.0;
  for (std::size_t i = 0; i < t; ++i) sum += m.at(t - 1, i);
  return sum / static_cast<double>(t);
}

double backward_transfer(const ScoreMatrix& m) {
  const auto t = m.tasks();
  if (t < 2) throw ValidationError("BWT needs at least two tasks");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) sum += m.at(t - 1, i) - m.at(i, i);
  return sum / static_cast<double>(t - 1);
}

RoutingF1 routing_f1(std::span<const std::string> predicted, std::span<const std::string> truth,
                     std::span<const std::string> expert_tasks) {
  if (predicted.size() != truth.size())
    throw ValidationError("routing_f1: " + std::to_string(predicted.size()) + " predictions vs " +
                          std::to_string(truth.size()) + " labels");
  std::set<std::string> classes(expert_tasks.begin(), expert_tasks.end());
  if (classes.empty()) {
    for (const auto& l : truth) classes.insert(l);
    for (const auto& l : predicted) classes.insert(l);
    classes.erase(std::string(kBaseLabel));
  }

  std::map<std::string, std::size_t> tp, fp, fn;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  const auto f1 = [&](const std::string& c) {
    const double t = static_cast<double>(tp[c]);
    const double denom = 2.0 * t + static_cast<double>(fp[c]) + static_cast<double>(fn[c]);
    return denom == 0.0 ? 0.0 : 2.0 * t / denom;
  };

  RoutingF1 out;
  double sum = 0.0;
  for (const auto& c : classes) {
    out.per_task[c] = f1(c);
    sum += out.per_task[c];
  }
  out.per_task[std::string(kBaseLabel)] = f1(std::string(kBaseLabel));
  out.macro = classes.empty() ? 0.0 : sum / static_cast<double>(classes.size());
  return out;
}

std::vector<std::string> handler_tasks(std::span<const RoutingTrace> traces,
                                       const Registry& registry) {
  std::map<std::string, std::string> task_of;
  for (const auto& e : registry.experts()) task_of[e.expert_id] = e.task_id;
  std::vector<std::string> out;
  out.reserve(traces.size());
  for (const auto& t : traces) {
    if (t.handled_by_base()) {
      out.emplace_back(kBaseLabel);
      continue;
    }
    const auto it = task_of.find(*t.handler_expert);
    if (it == task_of.end()) throw ValidationError("trace handler '" + *t.handler_expert + "' not in registry");
    out.push_back(it->second);
  }
  return out;
}

RoutingF1 routing_f1(std::span<const RoutingTrace> traces, std::span<const std::string> truth,
                     const Registry& registry) {
  std::vector<std::string> tasks;
  for (const auto& e : registry.experts()) tasks.push_back(e.task_id);
  const auto predicted = handler_tasks(traces, registry);
  return routing_f1(predicted, truth, tasks);
}

double rb_acc(std::span<const RoutingTrace> traces) {
  if (traces.empty()) throw ValidationError("rb_acc: no traces");
  const auto n = std::count_if(traces.begin(), traces.end(),
                               [](const RoutingTrace& t) { return t.handled_by_base(); });
  return static_cast<double>(n) / static_cast<double>(traces.size());
}

std::map<std::string, std::size_t> handler_counts(std::span<const RoutingTrace> traces) {
  std::map<std::string, std::size_t> out;
  for (const auto& t : traces) ++out[t.handler_label()];
  return out;
}

}  // namespace see
