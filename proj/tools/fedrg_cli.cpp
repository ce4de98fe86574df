// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: pretrain | gen-data | run | ablate | sweep | eval |
// comm-report. Configuration comes from one JSON file plus dotted-path
// overrides; every failure exits nonzero with a machine-readable error JSON
// on stderr.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedrg/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedrg;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("-c,--config", o.config_path, "experiment config JSON file");
  cmd->add_option("--override", o.overrides, "dotted-path override, e.g. rounds.rounds=5")
      ->take_all();
  cmd->add_option("--seed", o.seed, "experiment seed (overrides the config)")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("-o,--out", o.out, "output directory (overrides the config)");
}

ExperimentConfig load_config(const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = ExperimentConfig::from_json_text(read_file(o.config_path));
  for (const auto& ov : o.overrides) cfg.apply_override(ov);
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.fed.seed = o.seed;
  }
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

json eval_point_json(const EvalPoint& p) {
  return {{"round", p.round},
          {"in_domain", json::parse(p.in_domain.to_json())},
          {"unseen", json::parse(p.unseen.to_json())}};
}

int cmd_pretrain(const CommonOpts& o) {
  ExperimentConfig cfg = load_config(o);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const std::string prefix =
      cfg.base_checkpoint.empty() ? (out / "base").string() : cfg.base_checkpoint;
  pretrain_and_save(cfg, build_vocab(), prefix);
  std::cout << json{{"base_checkpoint", prefix}, {"steps", cfg.pretrain_steps}}.dump(2) << '\n';
  return 0;
}

int cmd_gen_data(const CommonOpts& o) {
  ExperimentConfig cfg = load_config(o);
  Federation fed = gen_federation(cfg.fed);
  fs::create_directories(cfg.out_dir);
  export_dataset(fed, cfg.out_dir);
  json j{{"out_dir", cfg.out_dir},
         {"n_clients", cfg.fed.n_clients},
         {"in_domain_test", fed.in_domain_test.size()},
         {"unseen_test", fed.unseen_test.size()},
         {"label_chi_square", label_chi_square(fed)}};
  json sizes = json::array();
  for (const auto& c : fed.clients)
    sizes.push_back({{"client", c.profile.client_id},
                     {"train", c.train.size()},
                     {"val", c.val.size()},
                     {"style_cluster", c.profile.style_cluster}});
  j["clients"] = sizes;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_run(const CommonOpts& o) {
  ExperimentConfig cfg = load_config(o);
  RunArtifacts art = run_experiment(cfg);
  json evals = json::array();
  for (const auto& p : art.evals) evals.push_back(eval_point_json(p));
  json j{{"out_dir", cfg.out_dir},
         {"rounds", cfg.rounds.rounds},
         {"up_bytes_total", art.run.ledger.total("up")},
         {"down_bytes_total", art.run.ledger.total("down")},
         {"evals", evals}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_ablate(const CommonOpts& o) {
  ExperimentConfig cfg = load_config(o);
  auto rows = run_ablation(cfg);
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"variant", r.variant}, {"final", eval_point_json(r.final_eval)}});
  std::cout << json{{"out_dir", cfg.out_dir}, {"rows", j}}.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const CommonOpts& o, const SweepSpec& spec) {
  ExperimentConfig cfg = load_config(o);
  auto rows = run_sweep(spec, cfg);
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"value", r.value},
                 {"seed", r.seed},
                 {"up_bytes", r.up_bytes_total},
                 {"final", eval_point_json(r.final_eval)}});
  std::cout << json{{"axis", spec.axis}, {"out_dir", cfg.out_dir}, {"rows", j}}.dump(2) << '\n';
  return 0;
}

// Re-evaluates the artifacts of a finished run: server checkpoint for the
// unseen-domain protocol, per-client specialized adapters for in-domain.
int cmd_eval(const CommonOpts& o, const std::string& run_dir) {
  CommonOpts merged = o;
  if (merged.config_path.empty()) merged.config_path = (fs::path(run_dir) / "config.json").string();
  ExperimentConfig cfg = load_config(merged);
  const Vocab vocab = build_vocab();
  const Federation fed = gen_federation(cfg.fed);
  ParameterSet init = build_initial_params(cfg, vocab);

  ServerState server;
  std::vector<ClientState> clients;
  initialize(fed, init, cfg.train.bank_capacity, server, clients);
  deserialize_params(load_checkpoint((fs::path(run_dir) / "server_final").string()),
                     server.globals);
  ServerPayload payload = make_payload(server);
  for (auto& c : clients) {
    deserialize_params(payload.encoder, c.params);
    deserialize_params(payload.adapter_g, c.params);
    const fs::path adapter =
        fs::path(run_dir) / ("client" + std::to_string(c.client_id) + "_adapter_s");
    if (fs::exists(adapter.string() + ".bin"))
      deserialize_params(load_checkpoint(adapter.string()), c.params);
  }

  GenerationSettings gs;
  gs.model = cfg.train.model;
  gs.alpha_inf = cfg.train.alpha_inf;
  gs.no_prompt = cfg.train.no_prompt;
  gs.max_len = cfg.train.model.max_report_len;
  EvalPoint p;
  p.round = cfg.rounds.rounds;
  p.in_domain = eval_in_domain(clients, fed.in_domain_test, gs, vocab);
  p.unseen = eval_unseen(server, fed.unseen_test, gs, vocab);
  std::cout << eval_point_json(p).dump(2) << '\n';
  return 0;
}

int cmd_comm_report(const CommonOpts& o, double client_bw, double server_bw) {
  ExperimentConfig cfg = load_config(o);
  const Vocab vocab = build_vocab();
  ParameterSet params = build_initial_params(cfg, vocab);
  json j;
  for (const char* policy : {"full_model", "fedmrg_selective"}) {
    auto cost = comm_cost(policy, params, cfg.train.bank_vectors_per_round,
                          cfg.train.model.channels);
    long total = 0;
    json by_cat;
    for (const auto& [cat, bytes] : cost) {
      by_cat[cat] = bytes;
      total += bytes;
    }
    auto t = estimate_transfer_time(total, client_bw, cfg.fed.n_clients, server_bw);
    j[policy] = {{"bytes_by_category", by_cat},
                 {"bytes_per_round_per_client", total},
                 {"per_client_seconds", t.per_client_seconds},
                 {"server_fanin_seconds", t.server_fanin_seconds}};
  }
  j["selective_fraction"] =
      static_cast<double>(j["fedmrg_selective"]["bytes_per_round_per_client"].get<long>()) /
      static_cast<double>(j["full_model"]["bytes_per_round_per_client"].get<long>());
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream os(fs::path(cfg.out_dir) / "comm_report.json");
    os << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated report-generation simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* pretrain = app.add_subcommand("pretrain", "pretrain and save the frozen decoder base");
  auto* gen_data = app.add_subcommand("gen-data", "generate and export the federated benchmark");
  auto* run = app.add_subcommand("run", "full federated training + evaluation");
  auto* ablate = app.add_subcommand("ablate", "full model plus single-mechanism removals");
  auto* sweep = app.add_subcommand("sweep", "hyper-parameter sweep, one run per cell");
  auto* eval = app.add_subcommand("eval", "re-evaluate a finished run's checkpoints");
  auto* comm = app.add_subcommand("comm-report", "per-round payload bytes and transfer times");
  for (auto* c : {pretrain, gen_data, run, ablate, sweep, eval, comm}) add_common(c, opts);

  SweepSpec spec;
  sweep->add_option("--axis", spec.axis,
                    "tau | lambda_hcl | lambda_kd | n_clients | dirichlet_alpha")
      ->required();
  sweep->add_option("--values", spec.values, "axis values (at least 2)")->required()->take_all();
  sweep->add_option("--repeats", spec.repeats, "distinct seeds per value");

  std::string run_dir;
  eval->add_option("--run-dir", run_dir, "directory written by `run`")->required();

  double client_bw = 1e6, server_bw = 1e6;
  comm->add_option("--bandwidth", client_bw, "client link bytes/s");
  comm->add_option("--server-bandwidth", server_bw, "server link bytes/s");

  try {
    app.parse(argc, argv);
    if (pretrain->parsed()) return cmd_pretrain(opts);
    if (gen_data->parsed()) return cmd_gen_data(opts);
    if (run->parsed()) return cmd_run(opts);
    if (ablate->parsed()) return cmd_ablate(opts);
    if (sweep->parsed()) return cmd_sweep(opts, spec);
    if (eval->parsed()) return cmd_eval(opts, run_dir);
    if (comm->parsed()) return cmd_comm_report(opts, client_bw, server_bw);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << json{{"error", {{"type", "cli"}, {"message", e.what()}}}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", "runtime"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
}
