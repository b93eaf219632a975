#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace see {

enum class Split { Train, Eval };

const char* to_string(Split split);
Split parse_split(const std::string& text);

struct Instance {
  std::string query;
  std::string response;

  bool operator==(const Instance&) const = default;
};

struct TaskDataset {
  std::string task_id;
  std::vector<Instance> instances;
  Split split = Split::Train;

  std::size_t size() const noexcept { return instances.size(); }
};

struct LoadOptions {
  // Rehearsal pools and OOD streams only need queries.
  bool queries_only = false;
};

/// Reads one JSON object per line with a required `query` and an optional
/// `response`. Blank lines are skipped; instance order is file order.
/// Throws ValidationError naming the 1-based line of the first bad record.
TaskDataset load_task_dataset(const std::filesystem::path& path,
                              const std::string& task_id, Split split,
                              LoadOptions options = {});

TaskDataset parse_task_dataset(const std::string& content,
                               const std::string& task_id, Split split,
                               LoadOptions options = {});

void write_task_dataset(const TaskDataset& dataset,
                        const std::filesystem::path& path);

// Rejects a scenario whose datasets reuse a task id.
void check_unique_task_ids(const std::vector<TaskDataset>& datasets);

}  // namespace see
