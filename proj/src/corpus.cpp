#include "see/corpus.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "see/error.h"

namespace see {

namespace {

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

}  // namespace

const char* to_string(TransportError::Kind kind) {
  switch (kind) {
    case TransportError::Kind::Connection: return "connection";
    case TransportError::Kind::Timeout: return "timeout";
    case TransportError::Kind::Status: return "status";
    case TransportError::Kind::Protocol: return "protocol";
  }
  return "unknown";
}

const char* to_string(Split split) { return split == Split::Train ? "train" : "eval"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "eval") return Split::Eval;
  throw ValidationError("unknown split '" + text + "' (expected train or eval)");
}

TaskDataset parse_task_dataset(const std::string& content, const std::string& task_id,
                               Split split, LoadOptions options) {
  if (task_id.empty()) throw ValidationError("task id must not be empty");
  TaskDataset dataset{task_id, {}, split};
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto where = [&] { return task_id + " line " + std::to_string(line_no) + ": "; };
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where() + "malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object()) throw ValidationError(where() + "record is not a JSON object");
    const auto q = record.find("query");
    if (q == record.end() || !q->is_string())
      throw ValidationError(where() + "missing string field 'query'");
    Instance inst;
    inst.query = q->get<std::string>();
    if (blank(inst.query)) throw ValidationError(where() + "empty query");
    if (const auto r = record.find("response"); r != record.end() && !r->is_null()) {
      if (!r->is_string()) throw ValidationError(where() + "field 'response' is not a string");
      inst.response = r->get<std::string>();
    }
    if (inst.response.empty() && !options.queries_only)
      throw ValidationError(where() + "missing response");
    dataset.instances.push_back(std::move(inst));
  }
  if (dataset.instances.empty()) throw ValidationError(task_id + ": empty dataset");
  return dataset;
}

TaskDataset load_task_dataset(const std::filesystem::path& path, const std::string& task_id,
                              Split split, LoadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_task_dataset(buf.str(), task_id, split, options);
}

void write_task_dataset(const TaskDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& inst : dataset.instances) {
    nlohmann::ordered_json rec;
    rec["query"] = inst.query;
    if (!inst.response.empty()) rec["response"] = inst.response;
    out << rec.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void check_unique_task_ids(const std::vector<TaskDataset>& datasets) {
  std::set<std::string> seen;
  for (const auto& d : datasets) {
    if (!seen.insert(d.task_id).second)
      throw ValidationError("duplicate task id '" + d.task_id + "' in scenario");
  }
}

}  // namespace see
