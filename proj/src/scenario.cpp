#include "see/scenario.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "see/error.h"
#include "see/hashing.h"

namespace see {

namespace fs = std::filesystem;

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& what) {
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("unknown field '" + key + "' in " + what);
}

SyntheticTemplate parse_template(const nlohmann::json& j) {
  reject_unknown(j,
                 {"type", "own_recognition", "own_recognition_per_tau", "previous_recognition",
                  "previous_recognition_per_tau", "other_recognition", "quality",
                  "default_quality", "cross_quality", "no_indicator_rate", "base_quality",
                  "base_default_quality", "serve_over_http"},
                 "synthetic backend");
  SyntheticTemplate t;
  t.own_recognition = get_or(j, "own_recognition", t.own_recognition);
  t.own_recognition_per_tau = get_or(j, "own_recognition_per_tau", t.own_recognition_per_tau);
  t.previous_recognition = get_or(j, "previous_recognition", t.previous_recognition);
  t.previous_recognition_per_tau =
      get_or(j, "previous_recognition_per_tau", t.previous_recognition_per_tau);
  t.other_recognition = get_or(j, "other_recognition", t.other_recognition);
  t.quality = get_or(j, "quality", t.quality);
  t.default_quality = get_or(j, "default_quality", t.default_quality);
  t.cross_quality = get_or(j, "cross_quality", t.cross_quality);
  t.no_indicator_rate = get_or(j, "no_indicator_rate", t.no_indicator_rate);
  t.base_quality = get_or(j, "base_quality", t.base_quality);
  t.base_default_quality = get_or(j, "base_default_quality", t.base_default_quality);
  t.serve_over_http = get_or(j, "serve_over_http", t.serve_over_http);
  return t;
}

ExternalBackend parse_external(const nlohmann::json& j) {
  reject_unknown(j, {"type", "trainer_command", "base", "expert_timeout_ms", "base_timeout_ms"},
                 "external backend");
  ExternalBackend b;
  b.trainer_command = j.at("trainer_command").get<std::string>();
  const auto& base = j.at("base");
  b.base = {base.at("endpoint").get<std::string>(), base.at("model_name").get<std::string>()};
  b.expert_timeout = std::chrono::milliseconds(get_or(j, "expert_timeout_ms", 30000L));
  b.base_timeout = std::chrono::milliseconds(get_or(j, "base_timeout_ms", 120000L));
  return b;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

std::string expert_id_for(std::size_t stage, const std::string& task) {
  return "expert-" + std::to_string(stage) + "-" + task;
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("scenario config must be a JSON object");
  reject_unknown(j,
                 {"name", "tasks", "tau", "seed", "indicators", "backend",
                  "pseudo_negative_corpus", "ood_eval", "eval_concurrency", "max_tokens",
                  "output_dir"},
                 "scenario config");
  ScenarioConfig c;
  try {
    c.name = get_or(j, "name", c.name);
    c.tau = get_or(j, "tau", c.tau);
    c.seed = get_or(j, "seed", c.seed);
    if (const auto ind = j.find("indicators"); ind != j.end())
      c.indicators = IndicatorConfig::from_json(*ind);
    for (const auto& t : j.at("tasks")) {
      reject_unknown(t, {"task_id", "train", "eval"}, "task entry");
      c.tasks.push_back({t.at("task_id").get<std::string>(),
                         resolve(base_dir, t.at("train").get<std::string>()),
                         resolve(base_dir, t.at("eval").get<std::string>())});
    }
    if (const auto b = j.find("backend"); b != j.end()) {
      const auto type = b->value("type", std::string("synthetic"));
      if (type == "synthetic") c.backend = parse_template(*b);
      else if (type == "external") c.backend = parse_external(*b);
      else throw ValidationError("unknown backend type '" + type + "'");
    }
    if (const auto p = j.find("pseudo_negative_corpus"); p != j.end())
      c.pseudo_negative_corpus = resolve(base_dir, p->get<std::string>());
    if (const auto p = j.find("ood_eval"); p != j.end())
      c.ood_eval = resolve(base_dir, p->get<std::string>());
    c.eval_concurrency = get_or(j, "eval_concurrency", c.eval_concurrency);
    c.max_tokens = get_or(j, "max_tokens", c.max_tokens);
    c.output_dir = resolve(base_dir, get_or(j, "output_dir", std::string("out")));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed scenario config " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void ScenarioConfig::validate() const {
  if (tasks.empty()) throw ValidationError("scenario has no tasks");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must be within [0, 1]");
  if (max_tokens <= 0) throw ValidationError("max_tokens must be positive");
  indicators.validate();
  std::vector<std::string> ids;
  for (const auto& t : tasks) {
    if (t.task_id.empty() || t.task_id == kOodTask)
      throw ValidationError("invalid task id '" + t.task_id + "'");
    ids.push_back(t.task_id);
    for (const auto& p : {t.train, t.eval})
      if (!fs::exists(p)) throw ValidationError("missing file " + p.string());
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ValidationError("duplicate task id in scenario");
  for (const auto& p : {pseudo_negative_corpus, ood_eval})
    if (p && !fs::exists(*p)) throw ValidationError("missing file " + p->string());
}

ExpertProfile synthetic_profile_for_stage(const ScenarioConfig& config,
                                          const SyntheticTemplate& tmpl, std::size_t stage) {
  const auto& own = config.tasks.at(stage - 1).task_id;
  ExpertProfile p;
  p.expert_id = expert_id_for(stage, own);
  p.model_name = p.expert_id;
  p.own_task = own;
  p.indicators = config.indicators;
  p.no_indicator_rate = clamp01(tmpl.no_indicator_rate);
  p.seed = mix_seed(config.seed, p.expert_id);
  for (std::size_t j = 0; j < config.tasks.size(); ++j) {
    const auto& task = config.tasks[j].task_id;
    if (j + 1 == stage) {
      p.recognition[task] = clamp01(tmpl.own_recognition + tmpl.own_recognition_per_tau * config.tau);
      const auto q = tmpl.quality.find(task);
      p.answer_quality[task] = clamp01(q == tmpl.quality.end() ? tmpl.default_quality : q->second);
    } else {
      p.recognition[task] =
          j + 1 < stage
              ? clamp01(tmpl.previous_recognition + tmpl.previous_recognition_per_tau * config.tau)
              : clamp01(tmpl.other_recognition);
      p.answer_quality[task] = clamp01(tmpl.cross_quality);
    }
  }
  p.recognition[std::string(kOodTask)] = clamp01(tmpl.other_recognition);
  return p;
}

ExpertProfile synthetic_base_profile(const ScenarioConfig& config, const SyntheticTemplate& tmpl) {
  ExpertProfile p;
  p.expert_id = "base";
  p.model_name = "synthetic-base";
  p.role = ExpertProfile::Role::Base;
  p.answer_quality = tmpl.base_quality;
  for (const auto& t : config.tasks) p.answer_quality.emplace(t.task_id, tmpl.base_default_quality);
  p.answer_quality.emplace(std::string(kOodTask), tmpl.base_default_quality);
  for (auto& [_, q] : p.answer_quality) q = clamp01(q);
  return p;
}

std::vector<double> StageEvaluation::row() const {
  std::vector<double> out;
  for (const auto& t : tasks) out.push_back(t.score);
  return out;
}

std::vector<RoutingTrace> StageEvaluation::all_traces() const {
  std::vector<RoutingTrace> out;
  for (const auto& t : tasks) out.insert(out.end(), t.traces.begin(), t.traces.end());
  return out;
}

std::vector<std::string> StageEvaluation::truth() const {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.insert(out.end(), t.traces.size(), t.task_id);
  return out;
}

namespace {

std::string eval_key(const std::string& task, std::size_t index) {
  return task + ":eval:" + std::to_string(index);
}

}  // namespace

StageEvaluation evaluate_stage(const Registry& registry, const std::vector<TaskDataset>& eval_sets,
                               const EvalOptions& options, CompletionClient& experts,
                               CompletionClient& base) {
  RouteParams params;
  params.max_tokens = options.max_tokens;
  params.on_expert_error = options.on_expert_error;

  StageEvaluation out;
  for (const auto& set : eval_sets) {
    TaskEvaluation te;
    te.task_id = set.task_id;
    const auto n = set.instances.size();
    te.traces.resize(n);
    te.scores.resize(n);
    parallel_for(n, options.concurrency, [&](std::size_t i) {
      const auto& inst = set.instances[i];
      const auto prompt =
          options.synthetic_labels
              ? synthetic_prompt({inst.query, set.task_id, eval_key(set.task_id, i), inst.response})
              : inst.query;
      te.traces[i] = route(registry, prompt, params, experts, base);
      te.scores[i] = rouge_l(te.traces[i].answer, inst.response);
    });
    te.score = average_rouge(te.scores);
    out.tasks.push_back(std::move(te));
  }
  return out;
}

std::vector<RoutingTrace> route_ood(const Registry& registry, const TaskDataset& ood,
                                    const EvalOptions& options, CompletionClient& experts,
                                    CompletionClient& base) {
  RouteParams params;
  params.max_tokens = options.max_tokens;
  params.on_expert_error = options.on_expert_error;
  std::vector<RoutingTrace> traces(ood.size());
  parallel_for(ood.size(), options.concurrency, [&](std::size_t i) {
    const auto& q = ood.instances[i].query;
    const auto prompt = options.synthetic_labels
                            ? synthetic_prompt({q, std::string(kOodTask),
                                                std::string(kOodTask) + ":" + std::to_string(i),
                                                std::nullopt})
                            : q;
    traces[i] = route(registry, prompt, params, experts, base);
  });
  return traces;
}

void write_traces(const StageEvaluation& evaluation, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& task : evaluation.tasks) {
    for (std::size_t i = 0; i < task.traces.size(); ++i) {
      nlohmann::ordered_json line;
      line["task"] = task.task_id;
      line["index"] = i;
      line["score"] = task.scores[i];
      const auto trace = trace_to_json(task.traces[i], false);
      for (const auto& [k, v] : trace.items()) line[k] = v;
      out << line.dump() << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

// Owns whatever serves the experts for one scenario run.
struct Backends {
  std::shared_ptr<CompletionClient> experts;
  std::shared_ptr<CompletionClient> base;
  std::unique_ptr<SyntheticServer> server;
  std::string expert_endpoint;
  BaseModel base_model;
  bool synthetic = false;
};

Backends make_backends(const ScenarioConfig& config) {
  Backends b;
  if (const auto* tmpl = std::get_if<SyntheticTemplate>(&config.backend)) {
    b.synthetic = true;
    std::vector<ExpertProfile> profiles;
    for (std::size_t s = 1; s <= config.tasks.size(); ++s)
      profiles.push_back(synthetic_profile_for_stage(config, *tmpl, s));
    const auto base_profile = synthetic_base_profile(config, *tmpl);
    profiles.push_back(base_profile);
    if (tmpl->serve_over_http) {
      b.server = std::make_unique<SyntheticServer>(profiles, "127.0.0.1", 0);
      b.server->start();
      b.expert_endpoint = b.server->endpoint();
      b.experts = std::make_shared<HttpCompletionClient>();
    } else {
      b.expert_endpoint = "inproc://synthetic";
      b.experts = std::make_shared<SyntheticFleet>(profiles);
    }
    b.base = b.experts;
    b.base_model = {b.expert_endpoint, base_profile.model_name};
  } else {
    const auto& ext = std::get<ExternalBackend>(config.backend);
    b.experts = std::make_shared<HttpCompletionClient>(
        HttpClientOptions{std::chrono::milliseconds(2000), ext.expert_timeout});
    b.base = std::make_shared<HttpCompletionClient>(
        HttpClientOptions{std::chrono::milliseconds(2000), ext.base_timeout});
    b.base_model = ext.base;
  }
  return b;
}

ExpertSpec train_external(const ExternalBackend& ext, const fs::path& dataset,
                          const fs::path& stage_dir, std::size_t stage,
                          const std::string& task_id, const IndicatorConfig& indicators) {
  auto cmd = ext.trainer_command;
  cmd = replace_all(cmd, "{dataset}", shell_quote(dataset.string()));
  cmd = replace_all(cmd, "{manifest}", shell_quote(manifest_path_for(dataset).string()));
  cmd = replace_all(cmd, "{stage_dir}", shell_quote(stage_dir.string()));
  cmd = replace_all(cmd, "{stage}", std::to_string(stage));
  cmd = replace_all(cmd, "{task_id}", shell_quote(task_id));
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw Error("trainer command exited with status " + std::to_string(rc));

  const auto stub_path = stage_dir / "expert.json";
  std::ifstream in(stub_path, std::ios::binary);
  if (!in) throw Error("trainer did not write " + stub_path.string());
  auto stub = nlohmann::json::parse(in, nullptr, false);
  if (stub.is_discarded() || !stub.is_object()) throw ValidationError("malformed " + stub_path.string());
  if (!stub.contains("stage")) stub["stage"] = stage;
  if (!stub.contains("task_id")) stub["task_id"] = task_id;
  if (!stub.contains("indicators")) stub["indicators"] = indicators.to_json();
  auto spec = ExpertSpec::from_json(stub);
  if (spec.stage != static_cast<int>(stage))
    throw ValidationError("expert.json stage " + std::to_string(spec.stage) + " != " + std::to_string(stage));
  if (spec.task_id != task_id)
    throw ValidationError("expert.json task_id '" + spec.task_id + "' != '" + task_id + "'");
  if (spec.indicators != indicators)
    throw ValidationError("expert.json indicators disagree with the reconstruction manifest");
  return spec;
}

}  // namespace

ScenarioResult run_sequence(const ScenarioConfig& config) {
  config.validate();
  const auto t_count = config.tasks.size();

  std::vector<TaskDataset> train, eval;
  for (const auto& t : config.tasks) {
    train.push_back(load_task_dataset(t.train, t.task_id, Split::Train));
    eval.push_back(load_task_dataset(t.eval, t.task_id, Split::Eval));
  }
  std::optional<TaskDataset> pseudo_corpus, ood;
  if (config.pseudo_negative_corpus)
    pseudo_corpus = load_task_dataset(*config.pseudo_negative_corpus, "pseudo-negative",
                                      Split::Train, {.queries_only = true});
  if (config.ood_eval)
    ood = load_task_dataset(*config.ood_eval, std::string(kOodTask), Split::Eval,
                            {.queries_only = true});

  fs::create_directories(config.output_dir);
  auto backends = make_backends(config);

  EvalOptions eval_options;
  eval_options.synthetic_labels = backends.synthetic;
  eval_options.max_tokens = config.max_tokens;
  eval_options.concurrency = config.eval_concurrency;

  Registry registry(backends.base_model);
  ScoreMatrix matrix(t_count);
  StageEvaluation last;

  for (std::size_t stage = 1; stage <= t_count; ++stage) {
    try {
      const auto& task = config.tasks[stage - 1];
      const auto stage_dir = config.output_dir / ("stage-" + std::to_string(stage));
      fs::create_directories(stage_dir);

      const std::vector<TaskDataset> history(train.begin(), train.begin() + (stage - 1));
      const auto stage_seed = mix_seed(config.seed, static_cast<std::uint64_t>(stage));
      ReconstructedDataset rec;
      if (pseudo_corpus) {
        std::size_t count = 0;
        for (const auto& h : history) count += rehearsal_count(h.size(), config.tau);
        rec = make_pseudo_negative(train[stage - 1], *pseudo_corpus, count, config.indicators,
                                   stage_seed);
        rec.tau = config.tau;
      } else {
        rec = reconstruct_task(train[stage - 1], history, config.tau, config.indicators,
                               stage_seed);
      }
      const auto dataset_path = stage_dir / "reconstructed.jsonl";
      write_reconstructed(rec, dataset_path);

      ExpertSpec spec;
      if (backends.synthetic) {
        const auto profile = synthetic_profile_for_stage(
            config, std::get<SyntheticTemplate>(config.backend), stage);
        write_json_file(stage_dir / "expert_profile.json", profile.to_json());
        spec = {profile.expert_id, task.task_id,   static_cast<int>(stage),
                backends.expert_endpoint, profile.model_name, config.indicators};
      } else {
        spec = train_external(std::get<ExternalBackend>(config.backend), dataset_path, stage_dir,
                              stage, task.task_id, config.indicators);
      }
      registry = registry.register_expert(spec);
      save_registry(registry, stage_dir / "registry.json");

      const std::vector<TaskDataset> seen(eval.begin(), eval.begin() + stage);
      last = evaluate_stage(registry, seen, eval_options, *backends.experts, *backends.base);
      write_traces(last, stage_dir / "traces.jsonl");
      matrix.set_row(stage - 1, last.row());
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  nlohmann::ordered_json report;
  report["name"] = config.name;
  auto task_ids = nlohmann::ordered_json::array();
  for (const auto& t : config.tasks) task_ids.push_back(t.task_id);
  report["tasks"] = task_ids;
  report["tau"] = config.tau;
  report["seed"] = config.seed;
  report["ar"] = ar(matrix);
  report["bwt_applicable"] = t_count >= 2;
  report["bwt"] = t_count >= 2 ? nlohmann::ordered_json(bwt(matrix)) : nlohmann::ordered_json();

  const auto traces = last.all_traces();
  const auto f1 = routing_f1(traces, last.truth(), registry);
  report["r_f1"] = {{"per_task", f1.per_task}, {"macro", f1.macro}};
  if (ood) {
    const auto ood_traces = route_ood(registry, *ood, eval_options, *backends.experts, *backends.base);
    report["rb_acc"] = rb_acc(ood_traces);
  } else {
    report["rb_acc"] = nullptr;
  }
  report["handler_counts"] = handler_counts(traces);
  report["score_matrix"] = matrix.to_json();

  write_json_file(config.output_dir / "score_matrix.json", matrix.to_json());
  write_json_file(config.output_dir / "report.json", report);
  save_registry(registry, config.output_dir / "registry.json");

  if (backends.server) backends.server->stop();
  return {std::move(matrix), std::move(registry), std::move(report)};
}

}  // namespace see
