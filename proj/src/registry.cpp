#include "see/registry.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "see/error.h"

namespace see {

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ValidationError("unknown field '" + key + "' in " + what);
  }
}

std::string required_string(const nlohmann::json& j, const char* key, const std::string& what) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
    throw ValidationError(what + ": missing or empty '" + key + "'");
  return it->get<std::string>();
}

}  // namespace

nlohmann::ordered_json ExpertSpec::to_json() const {
  nlohmann::ordered_json j;
  j["expert_id"] = expert_id;
  j["task_id"] = task_id;
  j["stage"] = stage;
  j["endpoint"] = endpoint;
  j["model_name"] = model_name;
  j["indicators"] = indicators.to_json();
  return j;
}

ExpertSpec ExpertSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("expert entry must be an object");
  reject_unknown(j, {"expert_id", "task_id", "stage", "endpoint", "model_name", "indicators"},
                 "expert");
  ExpertSpec spec;
  spec.expert_id = required_string(j, "expert_id", "expert");
  spec.task_id = required_string(j, "task_id", "expert " + spec.expert_id);
  spec.endpoint = required_string(j, "endpoint", "expert " + spec.expert_id);
  spec.model_name = required_string(j, "model_name", "expert " + spec.expert_id);
  const auto stage = j.find("stage");
  if (stage != j.end()) {
    if (!stage->is_number_integer())
      throw ValidationError("expert " + spec.expert_id + ": stage must be an integer");
    spec.stage = stage->get<int>();
  }
  const auto ind = j.find("indicators");
  if (ind == j.end()) throw ValidationError("expert " + spec.expert_id + ": missing indicators");
  spec.indicators = IndicatorConfig::from_json(*ind);
  return spec;
}

Registry Registry::register_expert(ExpertSpec spec) const {
  if (spec.stage != max_stage() + 1)
    throw ValidationError("non-contiguous stage " + std::to_string(spec.stage) + " (expected " +
                          std::to_string(max_stage() + 1) + ")");
  for (const auto& e : experts_) {
    if (e.expert_id == spec.expert_id)
      throw ValidationError("duplicate expert id '" + spec.expert_id + "'");
  }
  spec.indicators.validate();
  Registry next = *this;
  next.experts_.push_back(std::move(spec));
  return next;
}

std::vector<ExpertSpec> Registry::routing_order() const {
  return {experts_.rbegin(), experts_.rend()};
}

nlohmann::ordered_json Registry::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kRegistrySchemaVersion;
  j["base"] = {{"endpoint", base_.endpoint}, {"model_name", base_.model_name}};
  j["experts"] = nlohmann::ordered_json::array();
  for (const auto& e : experts_) j["experts"].push_back(e.to_json());
  return j;
}

Registry Registry::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("registry must be a JSON object");
  reject_unknown(j, {"schema_version", "base", "experts"}, "registry");
  const auto version = j.find("schema_version");
  if (version == j.end() || !version->is_number_integer())
    throw ValidationError("registry: missing schema_version");
  if (version->get<int>() != kRegistrySchemaVersion)
    throw ValidationError("registry: unsupported schema_version " +
                          std::to_string(version->get<int>()));
  const auto base = j.find("base");
  if (base == j.end() || !base->is_object()) throw ValidationError("registry: missing base entry");
  reject_unknown(*base, {"endpoint", "model_name"}, "base");
  Registry reg(BaseModel{required_string(*base, "endpoint", "base"),
                         required_string(*base, "model_name", "base")});
  if (const auto experts = j.find("experts"); experts != j.end()) {
    if (!experts->is_array()) throw ValidationError("registry: experts must be an array");
    for (const auto& e : *experts) reg = reg.register_expert(ExpertSpec::from_json(e));
  }
  return reg;
}

std::string serialize_registry(const Registry& registry) { return registry.to_json().dump(2) + "\n"; }

void save_registry(const Registry& registry, const std::filesystem::path& path) {
  // Write-then-rename so readers never observe a torn file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << serialize_registry(registry);
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open registry " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed registry " + path.string() + ": " + e.what());
  }
  return Registry::from_json(j);
}

}  // namespace see
