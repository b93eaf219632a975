#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "see/reconstruct.h"

namespace see {

inline constexpr int kRegistrySchemaVersion = 1;

struct ExpertSpec {
  std::string expert_id;
  std::string task_id;
  int stage = 0;
  std::string endpoint;
  std::string model_name;
  IndicatorConfig indicators;

  nlohmann::ordered_json to_json() const;
  static ExpertSpec from_json(const nlohmann::json& j);

  bool operator==(const ExpertSpec&) const = default;
};

struct BaseModel {
  std::string endpoint;
  std::string model_name;

  bool operator==(const BaseModel&) const = default;
};

// Ordered expert chain plus the base model. Values are immutable in practice:
// register_expert returns a new Registry.
class Registry {
 public:
  explicit Registry(BaseModel base) : base_(std::move(base)) {}

  const BaseModel& base() const noexcept { return base_; }
  // Stage-ascending.
  const std::vector<ExpertSpec>& experts() const noexcept { return experts_; }
  std::size_t size() const noexcept { return experts_.size(); }
  int max_stage() const noexcept { return experts_.empty() ? 0 : experts_.back().stage; }

  // Throws ValidationError unless spec.stage == max_stage() + 1 and the
  // expert id is new.
  Registry register_expert(ExpertSpec spec) const;

  // Newest first: stage N, N-1, ..., 1.
  std::vector<ExpertSpec> routing_order() const;

  nlohmann::ordered_json to_json() const;
  static Registry from_json(const nlohmann::json& j);

  bool operator==(const Registry&) const = default;

 private:
  BaseModel base_;
  std::vector<ExpertSpec> experts_;
};

inline std::vector<ExpertSpec> routing_order(const Registry& registry) {
  return registry.routing_order();
}

inline Registry register_expert(const Registry& registry, ExpertSpec spec) {
  return registry.register_expert(std::move(spec));
}

std::string serialize_registry(const Registry& registry);
void save_registry(const Registry& registry, const std::filesystem::path& path);
Registry load_registry(const std::filesystem::path& path);

// Shared, swappable registry for concurrent readers. Each reader holds its
// own snapshot; registration replaces the snapshot as a whole.
class RegistryHandle {
 public:
  explicit RegistryHandle(Registry initial)
      : current_(std::make_shared<const Registry>(std::move(initial))) {}

  std::shared_ptr<const Registry> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  void register_expert(ExpertSpec spec) {
    std::lock_guard lock(mutex_);
    current_ = std::make_shared<const Registry>(current_->register_expert(std::move(spec)));
  }

  void replace(Registry next) {
    auto ptr = std::make_shared<const Registry>(std::move(next));
    std::lock_guard lock(mutex_);
    current_ = std::move(ptr);
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const Registry> current_;
};

}  // namespace see
