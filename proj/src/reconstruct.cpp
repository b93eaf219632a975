#include "see/reconstruct.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "see/error.h"
#include "see/hashing.h"

namespace see {

const char* to_string(IndicatorKind kind) {
  switch (kind) {
    case IndicatorKind::AdditionalToken: return "additional_token";
    case IndicatorKind::NonSemantic: return "non_semantic";
    case IndicatorKind::Semantic: return "semantic";
  }
  return "unknown";
}

IndicatorKind parse_indicator_kind(const std::string& text) {
  if (text == "additional_token") return IndicatorKind::AdditionalToken;
  if (text == "non_semantic") return IndicatorKind::NonSemantic;
  if (text == "semantic") return IndicatorKind::Semantic;
  throw ValidationError("unknown indicator kind '" + text + "'");
}

IndicatorConfig IndicatorConfig::preset(IndicatorKind kind) {
  switch (kind) {
    case IndicatorKind::NonSemantic: return {"<<pos>>", "<<neg>>", kind};
    case IndicatorKind::Semantic: return {"Yes", "No", kind};
    case IndicatorKind::AdditionalToken: break;
  }
  return {"<|pos|>", "<|neg|>", IndicatorKind::AdditionalToken};
}

void IndicatorConfig::validate() const {
  if (positive.empty() || negative.empty())
    throw ValidationError("indicator strings must not be empty");
  if (positive == negative) throw ValidationError("positive and negative indicators are equal");
  if (positive.starts_with(negative) || negative.starts_with(positive))
    throw ValidationError("indicator '" + positive + "' / '" + negative +
                          "': one is a prefix of the other");
}

nlohmann::ordered_json IndicatorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["positive"] = positive;
  j["negative"] = negative;
  j["kind"] = to_string(kind);
  return j;
}

IndicatorConfig IndicatorConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("indicator config must be an object");
  IndicatorConfig cfg;
  const auto kind = j.find("kind");
  cfg.kind = kind == j.end() ? IndicatorKind::AdditionalToken
                             : parse_indicator_kind(kind->get<std::string>());
  const auto preset_cfg = preset(cfg.kind);
  cfg.positive = j.value("positive", preset_cfg.positive);
  cfg.negative = j.value("negative", preset_cfg.negative);
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "positive" && key != "negative")
      throw ValidationError("unknown indicator field '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::size_t rehearsal_count(std::size_t size, double tau) {
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  return static_cast<std::size_t>(std::floor(tau * static_cast<double>(size) + 1e-9));
}

namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("tau must be within [0, 1], got " + std::to_string(tau));
}

ReconstructedDataset assemble(const TaskDataset& current, std::vector<RehearsalQuery> negatives,
                              double tau, const IndicatorConfig& indicators,
                              std::uint64_t seed) {
  indicators.validate();
  ReconstructedDataset out;
  out.task_id = current.task_id;
  out.tau = tau;
  out.seed = seed;
  out.indicators = indicators;
  out.samples.reserve(current.size() + negatives.size());
  for (std::size_t i = 0; i < current.instances.size(); ++i) {
    const auto& inst = current.instances[i];
    if (inst.response.empty())
      throw ValidationError(current.task_id + " instance " + std::to_string(i + 1) +
                            " has no response");
    out.samples.push_back({inst.query, Polarity::Positive, inst.response, current.task_id});
  }
  for (auto& neg : negatives) {
    out.samples.push_back(
        {std::move(neg.query), Polarity::Negative, std::nullopt, std::move(neg.origin_task)});
  }
  out.n_positive = current.size();
  out.n_negative = negatives.size();
  DeterministicRng rng(mix_seed(seed, std::string_view("shuffle")));
  rng.shuffle(out.samples);
  return out;
}

}  // namespace

std::vector<RehearsalQuery> sample_rehearsal(const std::vector<TaskDataset>& history, double tau,
                                             std::uint64_t seed) {
  check_tau(tau);
  std::vector<RehearsalQuery> out;
  for (std::size_t j = 0; j < history.size(); ++j) {
    const auto& task = history[j];
    const std::size_t k = rehearsal_count(task.size(), tau);
    DeterministicRng rng(mix_seed(seed, static_cast<std::uint64_t>(j)));
    for (const auto idx : rng.sample_indices(task.size(), k))
      out.push_back({task.instances[idx].query, task.task_id});
  }
  return out;
}

ReconstructedDataset reconstruct_task(const TaskDataset& current,
                                      const std::vector<TaskDataset>& history, double tau,
                                      const IndicatorConfig& indicators, std::uint64_t seed) {
  return assemble(current, sample_rehearsal(history, tau, seed), tau, indicators, seed);
}

ReconstructedDataset make_pseudo_negative(const TaskDataset& current, const TaskDataset& external,
                                          std::size_t count, const IndicatorConfig& indicators,
                                          std::uint64_t seed) {
  if (count > external.size())
    throw ValidationError("pseudo-negative count " + std::to_string(count) + " exceeds " +
                          external.task_id + " size " + std::to_string(external.size()));
  DeterministicRng rng(mix_seed(seed, std::string_view("pseudo-negative")));
  std::vector<RehearsalQuery> negatives;
  negatives.reserve(count);
  for (const auto idx : rng.sample_indices(external.size(), count))
    negatives.push_back({external.instances[idx].query, external.task_id});
  // tau is not meaningful for the pseudo-negative variant.
  return assemble(current, std::move(negatives), 0.0, indicators, seed);
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".manifest.json");
  return p;
}

nlohmann::ordered_json manifest_json(const ReconstructedDataset& dataset) {
  nlohmann::ordered_json m;
  m["task_id"] = dataset.task_id;
  m["tau"] = dataset.tau;
  m["seed"] = dataset.seed;
  m["n_positive"] = dataset.n_positive;
  m["n_negative"] = dataset.n_negative;
  m["indicator"] = dataset.indicators.to_json();
  return m;
}

void write_reconstructed(const ReconstructedDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : dataset.samples) {
    nlohmann::ordered_json rec;
    rec["query"] = s.query;
    rec["indicator"] = s.indicator == Polarity::Positive ? dataset.indicators.positive
                                                         : dataset.indicators.negative;
    if (s.response) rec["response"] = *s.response;
    rec["origin_task"] = s.origin_task;
    out << rec.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());

  const auto mpath = manifest_path_for(path);
  std::ofstream mout(mpath, std::ios::binary | std::ios::trunc);
  if (!mout) throw Error("cannot write " + mpath.string());
  mout << manifest_json(dataset).dump(2) << '\n';
  if (!mout) throw Error("write failed: " + mpath.string());
}

ReconstructedDataset read_reconstructed(const std::filesystem::path& path) {
  const auto mpath = manifest_path_for(path);
  std::ifstream min(mpath, std::ios::binary);
  if (!min) throw ValidationError("missing manifest " + mpath.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + mpath.string() + ": " + e.what());
  }

  ReconstructedDataset ds;
  try {
    ds.task_id = manifest.at("task_id").get<std::string>();
    ds.tau = manifest.at("tau").get<double>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.n_positive = manifest.at("n_positive").get<std::size_t>();
    ds.n_negative = manifest.at("n_negative").get<std::size_t>();
    ds.indicators = IndicatorConfig::from_json(manifest.at("indicator"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid manifest " + mpath.string() + ": " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0, pos = 0, neg = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = path.string() + " line " + std::to_string(line_no) + ": ";
    try {
      const auto rec = nlohmann::json::parse(line);
      ReconstructedSample s;
      s.query = rec.at("query").get<std::string>();
      s.origin_task = rec.at("origin_task").get<std::string>();
      const auto indicator = rec.at("indicator").get<std::string>();
      if (indicator == ds.indicators.positive) {
        s.indicator = Polarity::Positive;
        s.response = rec.at("response").get<std::string>();
        ++pos;
      } else if (indicator == ds.indicators.negative) {
        s.indicator = Polarity::Negative;
        if (rec.contains("response")) throw ValidationError(where + "negative carries a response");
        ++neg;
      } else {
        throw ValidationError(where + "indicator '" + indicator + "' not in manifest");
      }
      ds.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + e.what());
    }
  }
  if (pos != ds.n_positive || neg != ds.n_negative)
    throw ValidationError(path.string() + ": counts disagree with manifest");
  return ds;
}

}  // namespace see
