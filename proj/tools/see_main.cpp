// Command-line front end: one binary, one subcommand per module.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "see/corpus.h"
#include "see/error.h"
#include "see/gateway.h"
#include "see/metrics.h"
#include "see/overhead.h"
#include "see/reconstruct.h"
#include "see/registry.h"
#include "see/scenario.h"
#include "see/synth_expert.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// "ID=path" or plain "path" (id = file name up to the first dot).
std::pair<std::string, fs::path> task_arg(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  const auto name = fs::path(arg).filename().string();
  return {name.substr(0, name.find('.')), arg};
}

void print(const ordered_json& j, bool json) {
  if (json) std::cout << j.dump() << '\n';
  else std::cout << j.dump(2) << '\n';
}

std::function<void()> g_stop;

void on_signal(int) {
  if (g_stop) g_stop();
}

void install_stop(std::function<void()> fn) {
  g_stop = std::move(fn);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

std::pair<std::string, int> split_listen(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw see::ValidationError("listen address must be host:port");
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

see::IndicatorConfig indicator_from_flags(const std::string& kind, const std::string& pos,
                                          const std::string& neg) {
  auto cfg = see::IndicatorConfig::preset(see::parse_indicator_kind(kind));
  if (!pos.empty()) cfg.positive = pos;
  if (!neg.empty()) cfg.negative = neg;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential ensemble of experts: reconstruction, routing gateway, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  bool json = false;
  app.add_flag("--json", json, "Compact machine-readable JSON output");

  // reconstruct
  auto* reconstruct = app.add_subcommand("reconstruct", "Build a routing-tagged dataset for one stage");
  std::string current_path, current_task, out_path, indicator_kind = "additional_token", pos_ind,
                                                    neg_ind, pseudo_path;
  std::vector<std::string> history_args;
  double tau = 0.1;
  std::uint64_t seed = 0;
  std::optional<std::size_t> pseudo_count;
  reconstruct->add_option("--current", current_path, "Current task dataset ([ID=]path)")->required();
  reconstruct->add_option("--history", history_args, "Previous task datasets ([ID=]path), oldest first");
  reconstruct->add_option("--tau", tau, "Rehearsal fraction in [0,1]")->capture_default_str();
  reconstruct->add_option("--seed", seed, "Sampling seed")->capture_default_str();
  reconstruct->add_option("--out", out_path, "Output JSONL (manifest written alongside)")->required();
  reconstruct->add_option("--indicator-kind", indicator_kind)
      ->check(CLI::IsMember({"additional_token", "non_semantic", "semantic"}))
      ->capture_default_str();
  reconstruct->add_option("--positive", pos_ind, "Override the positive indicator string");
  reconstruct->add_option("--negative", neg_ind, "Override the negative indicator string");
  reconstruct->add_option("--pseudo-external", pseudo_path,
                          "Draw negatives from this external corpus instead of history");
  reconstruct->add_option("--pseudo-count", pseudo_count,
                          "Number of pseudo negatives (default: what rehearsal would give)");

  // registry
  auto* registry_cmd = app.add_subcommand("registry", "Manage the expert chain");
  registry_cmd->require_subcommand(1);
  std::string registry_path;
  auto* reg_init = registry_cmd->add_subcommand("init", "Create a registry with only the base model");
  std::string base_endpoint, base_model;
  reg_init->add_option("--registry", registry_path)->required();
  reg_init->add_option("--base-endpoint", base_endpoint)->required();
  reg_init->add_option("--base-model", base_model)->required();
  auto* reg_add = registry_cmd->add_subcommand("add", "Append the next-stage expert");
  std::string expert_json, expert_id, expert_task, expert_endpoint, expert_model;
  std::optional<int> expert_stage;
  reg_add->add_option("--registry", registry_path)->required();
  reg_add->add_option("--expert-json", expert_json, "ExpertSpec stub (e.g. a trainer's expert.json)");
  reg_add->add_option("--expert-id", expert_id);
  reg_add->add_option("--task", expert_task);
  reg_add->add_option("--endpoint", expert_endpoint);
  reg_add->add_option("--model", expert_model);
  reg_add->add_option("--stage", expert_stage, "Defaults to the next stage");
  reg_add->add_option("--indicator-kind", indicator_kind)
      ->check(CLI::IsMember({"additional_token", "non_semantic", "semantic"}));
  reg_add->add_option("--positive", pos_ind);
  reg_add->add_option("--negative", neg_ind);
  auto* reg_show = registry_cmd->add_subcommand("show", "Print the registry and routing order");
  reg_show->add_option("--registry", registry_path)->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the sequential-routing gateway");
  std::string listen = "127.0.0.1:8080", gateway_config, policy;
  std::optional<long> expert_timeout_ms;
  serve->add_option("--registry", registry_path);
  serve->add_option("--listen", listen)->capture_default_str();
  serve->add_option("--config", gateway_config, "Gateway config JSON");
  serve->add_option("--policy", policy, "Expert transport error policy")
      ->check(CLI::IsMember({"fallback", "strict"}));
  serve->add_option("--expert-timeout-ms", expert_timeout_ms);

  // synth
  auto* synth = app.add_subcommand("synth", "Synthetic expert backends");
  synth->require_subcommand(1);
  auto* synth_serve = synth->add_subcommand("serve", "Serve synthetic experts over HTTP");
  std::string profiles_path;
  synth_serve->add_option("--profiles", profiles_path, "JSON list of expert profiles")->required();
  synth_serve->add_option("--listen", listen)->capture_default_str();
  auto* synth_gen = synth->add_subcommand("generate", "Write a toy dataset with synthetic references");
  std::string gen_task, gen_split = "train";
  std::size_t gen_count = 100, gen_tokens = 10;
  synth_gen->add_option("--task", gen_task)->required();
  synth_gen->add_option("--count", gen_count)->capture_default_str();
  synth_gen->add_option("--ref-tokens", gen_tokens)->capture_default_str();
  synth_gen->add_option("--split", gen_split)->check(CLI::IsMember({"train", "eval"}));
  synth_gen->add_option("--seed", seed)->capture_default_str();
  synth_gen->add_option("--out", out_path)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Route eval sets through a registry and score them");
  std::vector<std::string> eval_args;
  std::string ood_path, traces_path;
  bool synthetic_labels = false;
  std::size_t concurrency = 4;
  int max_tokens = 512;
  eval->add_option("--registry", registry_path)->required();
  eval->add_option("--eval", eval_args, "Eval datasets ([ID=]path)")->required();
  eval->add_option("--ood", ood_path, "OOD queries for RB-Acc");
  eval->add_flag("--synthetic-labels", synthetic_labels, "Prefix labels for synthetic experts");
  eval->add_option("--concurrency", concurrency)->capture_default_str();
  eval->add_option("--max-tokens", max_tokens)->capture_default_str();
  eval->add_option("--traces", traces_path, "Write per-query traces (JSONL)");

  // overhead
  auto* overhead = app.add_subcommand("overhead", "Latency overhead of sequential routing");
  see::LatencyParams lp;
  bool simulate = false;
  long trials = 100000;
  overhead->add_option("--ttft", lp.ttft)->required();
  overhead->add_option("--tpot", lp.tpot)->required();
  overhead->add_option("--n", lp.n_out, "Output tokens")->required();
  overhead->add_option("--m", lp.m_experts, "Number of experts")->required();
  overhead->add_flag("--simulate", simulate, "Also run the Monte-Carlo simulator");
  overhead->add_option("--trials", trials)->capture_default_str();
  overhead->add_option("--seed", seed)->capture_default_str();

  // run-sequence
  auto* run_seq = app.add_subcommand("run-sequence", "Run a continual-learning scenario end to end");
  std::string config_path, out_dir;
  run_seq->add_option("--config", config_path, "Scenario config (JSON)")->required();
  run_seq->add_option("--out", out_dir, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*reconstruct) {
      const auto [cur_id, cur_path] = task_arg(current_path);
      const auto current = see::load_task_dataset(cur_path, cur_id, see::Split::Train);
      std::vector<see::TaskDataset> history;
      for (const auto& h : history_args) {
        const auto [id, path] = task_arg(h);
        history.push_back(see::load_task_dataset(path, id, see::Split::Train, {.queries_only = true}));
      }
      auto all = history;
      all.push_back(current);
      see::check_unique_task_ids(all);
      const auto indicators = indicator_from_flags(indicator_kind, pos_ind, neg_ind);
      see::ReconstructedDataset rec;
      if (!pseudo_path.empty()) {
        const auto [ext_id, ext_path] = task_arg(pseudo_path);
        const auto external =
            see::load_task_dataset(ext_path, ext_id, see::Split::Train, {.queries_only = true});
        std::size_t count = 0;
        for (const auto& d : history) count += see::rehearsal_count(d.size(), tau);
        rec = see::make_pseudo_negative(current, external, pseudo_count.value_or(count), indicators,
                                        seed);
        rec.tau = tau;
      } else {
        rec = see::reconstruct_task(current, history, tau, indicators, seed);
      }
      see::write_reconstructed(rec, out_path);
      auto summary = see::manifest_json(rec);
      summary["out"] = out_path;
      summary["manifest"] = see::manifest_path_for(out_path).string();
      print(summary, json);
    } else if (*registry_cmd) {
      if (*reg_init) {
        see::save_registry(see::Registry({base_endpoint, base_model}), registry_path);
        print(see::load_registry(registry_path).to_json(), json);
      } else if (*reg_add) {
        auto reg = see::load_registry(registry_path);
        see::ExpertSpec spec;
        if (!expert_json.empty()) {
          std::ifstream in(expert_json);
          if (!in) throw see::ValidationError("cannot open " + expert_json);
          auto stub = nlohmann::json::parse(in);
          if (!stub.contains("stage")) stub["stage"] = reg.max_stage() + 1;
          spec = see::ExpertSpec::from_json(stub);
        } else {
          if (expert_id.empty() || expert_task.empty() || expert_endpoint.empty())
            throw CLI::ValidationError("registry add",
                                       "--expert-id, --task and --endpoint are required without --expert-json");
          spec.expert_id = expert_id;
          spec.task_id = expert_task;
          spec.endpoint = expert_endpoint;
          spec.model_name = expert_model.empty() ? expert_id : expert_model;
          spec.stage = expert_stage.value_or(reg.max_stage() + 1);
          spec.indicators = indicator_from_flags(indicator_kind, pos_ind, neg_ind);
        }
        if (expert_stage) spec.stage = *expert_stage;
        reg = reg.register_expert(spec);
        see::save_registry(reg, registry_path);
        print(reg.to_json(), json);
      } else {
        const auto reg = see::load_registry(registry_path);
        auto out = reg.to_json();
        auto order = ordered_json::array();
        for (const auto& e : reg.routing_order()) order.push_back(e.expert_id);
        out["routing_order"] = order;
        print(out, json);
      }
    } else if (*serve) {
      see::GatewayConfig cfg;
      if (!gateway_config.empty()) {
        std::ifstream in(gateway_config);
        if (!in) throw see::ValidationError("cannot open " + gateway_config);
        cfg = see::GatewayConfig::from_json(nlohmann::json::parse(in));
      }
      if (serve->count("--listen") || gateway_config.empty())
        std::tie(cfg.host, cfg.port) = split_listen(listen);
      if (!registry_path.empty()) cfg.registry_path = registry_path;
      if (!policy.empty())
        cfg.on_expert_error =
            policy == "strict" ? see::TransportPolicy::Strict : see::TransportPolicy::Fallback;
      if (expert_timeout_ms) cfg.expert_timeout = std::chrono::milliseconds(*expert_timeout_ms);
      if (cfg.registry_path.empty()) throw see::ValidationError("no registry given (--registry)");
      auto handle = std::make_shared<see::RegistryHandle>(see::load_registry(cfg.registry_path));
      see::GatewayServer server(handle, cfg);
      const int port = server.bind();
      std::cerr << "gateway listening on " << cfg.host << ":" << port << " with "
                << handle->snapshot()->size() << " experts\n";
      install_stop([&server] { server.stop(); });
      server.listen();
    } else if (*synth) {
      if (*synth_serve) {
        const auto [host, port] = split_listen(listen);
        see::SyntheticServer server(see::load_profiles(profiles_path), host, port);
        const int bound = server.bind();
        std::cerr << "synthetic experts listening on " << host << ":" << bound << "\n";
        install_stop([&server] { server.stop(); });
        server.listen();
      } else {
        const auto ds = see::generate_synthetic_task(gen_task, see::parse_split(gen_split),
                                                     gen_count, gen_tokens, seed);
        see::write_task_dataset(ds, out_path);
        print({{"task_id", gen_task}, {"count", ds.size()}, {"out", out_path}}, json);
      }
    } else if (*eval) {
      const auto reg = see::load_registry(registry_path);
      std::vector<see::TaskDataset> sets;
      for (const auto& a : eval_args) {
        const auto [id, path] = task_arg(a);
        sets.push_back(see::load_task_dataset(path, id, see::Split::Eval));
      }
      see::check_unique_task_ids(sets);
      see::HttpCompletionClient client;
      see::EvalOptions opts{synthetic_labels, max_tokens, concurrency,
                            see::TransportPolicy::Fallback};
      const auto result = see::evaluate_stage(reg, sets, opts, client, client);
      if (!traces_path.empty()) see::write_traces(result, traces_path);
      ordered_json out;
      ordered_json scores;
      for (const auto& t : result.tasks) scores[t.task_id] = t.score;
      out["scores"] = scores;
      const auto traces = result.all_traces();
      const auto f1 = see::routing_f1(traces, result.truth(), reg);
      out["r_f1"] = {{"per_task", f1.per_task}, {"macro", f1.macro}};
      out["handler_counts"] = see::handler_counts(traces);
      if (!ood_path.empty()) {
        const auto ood = see::load_task_dataset(ood_path, std::string(see::kOodTask),
                                                see::Split::Eval, {.queries_only = true});
        out["rb_acc"] = see::rb_acc(see::route_ood(reg, ood, opts, client, client));
      }
      print(out, json);
    } else if (*overhead) {
      lp.validate();
      ordered_json out;
      out["ttft"] = lp.ttft;
      out["tpot"] = lp.tpot;
      out["n"] = lp.n_out;
      out["m"] = lp.m_experts;
      out["expected_hops"] = see::expected_hops(lp.m_experts);
      out["latency_single"] = see::latency_single_model(lp);
      out["latency_sequential"] = see::latency_sequential(lp);
      out["extra_overhead"] = see::extra_overhead(lp);
      out["extra_overhead_from_latencies"] = see::extra_overhead_from_latencies(lp);
      if (simulate) out["simulation"] = see::simulate_latency(lp, trials, seed).to_json();
      print(out, json);
    } else if (*run_seq) {
      auto cfg = see::ScenarioConfig::load(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto result = see::run_sequence(cfg);
      ordered_json out;
      out["output_dir"] = cfg.output_dir.string();
      out["ar"] = result.report["ar"];
      out["bwt"] = result.report["bwt"];
      out["r_f1_macro"] = result.report["r_f1"]["macro"];
      out["rb_acc"] = result.report["rb_acc"];
      print(out, json);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
