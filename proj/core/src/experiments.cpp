// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedrg {

namespace {
using nlohmann::json;

std::string mode_name(PartitionMode m) {
  switch (m) {
    case PartitionMode::Random: return "random";
    case PartitionMode::Cluster: return "cluster";
    case PartitionMode::Dirichlet: return "dirichlet";
  }
  return "cluster";
}

PartitionMode mode_from(const std::string& s) {
  if (s == "random") return PartitionMode::Random;
  if (s == "cluster") return PartitionMode::Cluster;
  if (s == "dirichlet") return PartitionMode::Dirichlet;
  throw std::invalid_argument("unknown partition mode '" + s + "'");
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["federation"] = {{"n_clients", c.fed.n_clients},
                     {"mode", mode_name(c.fed.mode)},
                     {"dirichlet_alpha", c.fed.dirichlet_alpha},
                     {"samples_per_client", c.fed.samples_per_client},
                     {"min_samples", c.fed.min_samples},
                     {"max_samples", c.fed.max_samples},
                     {"train_fraction", c.fed.train_fraction},
                     {"test_per_client", c.fed.test_per_client},
                     {"unseen_test_size", c.fed.unseen_test_size},
                     {"seed", c.fed.seed}};
  j["rounds"] = {{"data_fraction", c.rounds.data_fraction},
                 {"batch_size", c.rounds.batch_size},
                 {"local_epochs", c.rounds.local_epochs},
                 {"rounds", c.rounds.rounds}};
  j["model"] = {{"lora_rank", c.train.model.lora_rank},
                {"d_model", c.train.model.d_model},
                {"n_layers", c.train.model.n_layers},
                {"n_heads", c.train.model.n_heads},
                {"channels", c.train.model.channels},
                {"max_report_len", c.train.model.max_report_len}};
  j["train"] = {{"lambda_hcl", c.train.weights.lambda_hcl},
                {"lambda_kd", c.train.weights.lambda_kd},
                {"tau", c.train.tau},
                {"lr", c.train.lr},
                {"alpha_inf", c.train.alpha_inf},
                {"bank_vectors_per_round", c.train.bank_vectors_per_round},
                {"bank_capacity", c.train.bank_capacity},
                {"no_A_s", c.train.no_specialized},
                {"no_hcl", c.train.no_hcl},
                {"no_prompt", c.train.no_prompt},
                {"no_g2l", c.train.no_g2l},
                {"no_l2g", c.train.no_l2g},
                {"strict_exclude_positive", c.train.strict_exclude_positive},
                {"kl_swapped", c.train.kl_swapped},
                {"uniform_fedavg", c.train.uniform_fedavg}};
  j["pretrain"] = {{"steps", c.pretrain_steps},
                   {"batch", c.pretrain_batch},
                   {"lr", c.pretrain_lr},
                   {"corpus_size", c.pretrain_corpus_size},
                   {"seed", c.pretrain_seed},
                   {"base_checkpoint", c.base_checkpoint}};
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["parallel_clients"] = c.parallel_clients;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("federation")) {
    const auto& f = j.at("federation");
    c.fed.n_clients = f.value("n_clients", c.fed.n_clients);
    c.fed.mode = mode_from(f.value("mode", mode_name(c.fed.mode)));
    c.fed.dirichlet_alpha = f.value("dirichlet_alpha", c.fed.dirichlet_alpha);
    c.fed.samples_per_client = f.value("samples_per_client", c.fed.samples_per_client);
    c.fed.min_samples = f.value("min_samples", c.fed.min_samples);
    c.fed.max_samples = f.value("max_samples", c.fed.max_samples);
    c.fed.train_fraction = f.value("train_fraction", c.fed.train_fraction);
    c.fed.test_per_client = f.value("test_per_client", c.fed.test_per_client);
    c.fed.unseen_test_size = f.value("unseen_test_size", c.fed.unseen_test_size);
    c.fed.seed = f.value("seed", c.fed.seed);
  }
  if (j.contains("rounds")) {
    const auto& r = j.at("rounds");
    c.rounds.data_fraction = r.value("data_fraction", c.rounds.data_fraction);
    c.rounds.batch_size = r.value("batch_size", c.rounds.batch_size);
    c.rounds.local_epochs = r.value("local_epochs", c.rounds.local_epochs);
    c.rounds.rounds = r.value("rounds", c.rounds.rounds);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.train.model.lora_rank = m.value("lora_rank", c.train.model.lora_rank);
    c.train.model.d_model = m.value("d_model", c.train.model.d_model);
    c.train.model.n_layers = m.value("n_layers", c.train.model.n_layers);
    c.train.model.n_heads = m.value("n_heads", c.train.model.n_heads);
    c.train.model.channels = m.value("channels", c.train.model.channels);
    c.train.model.max_report_len = m.value("max_report_len", c.train.model.max_report_len);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.weights.lambda_hcl = t.value("lambda_hcl", c.train.weights.lambda_hcl);
    c.train.weights.lambda_kd = t.value("lambda_kd", c.train.weights.lambda_kd);
    c.train.tau = t.value("tau", c.train.tau);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.alpha_inf = t.value("alpha_inf", c.train.alpha_inf);
    c.train.bank_vectors_per_round = t.value("bank_vectors_per_round", c.train.bank_vectors_per_round);
    c.train.bank_capacity = t.value("bank_capacity", c.train.bank_capacity);
    c.train.no_specialized = t.value("no_A_s", c.train.no_specialized);
    c.train.no_hcl = t.value("no_hcl", c.train.no_hcl);
    c.train.no_prompt = t.value("no_prompt", c.train.no_prompt);
    c.train.no_g2l = t.value("no_g2l", c.train.no_g2l);
    c.train.no_l2g = t.value("no_l2g", c.train.no_l2g);
    c.train.strict_exclude_positive = t.value("strict_exclude_positive", c.train.strict_exclude_positive);
    c.train.kl_swapped = t.value("kl_swapped", c.train.kl_swapped);
    c.train.uniform_fedavg = t.value("uniform_fedavg", c.train.uniform_fedavg);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    c.pretrain_steps = p.value("steps", c.pretrain_steps);
    c.pretrain_batch = p.value("batch", c.pretrain_batch);
    c.pretrain_lr = p.value("lr", c.pretrain_lr);
    c.pretrain_corpus_size = p.value("corpus_size", c.pretrain_corpus_size);
    c.pretrain_seed = p.value("seed", c.pretrain_seed);
    c.base_checkpoint = p.value("base_checkpoint", c.base_checkpoint);
  }
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.parallel_clients = j.value("parallel_clients", c.parallel_clients);
  return c;
}
}  // namespace

std::string ExperimentConfig::to_json_text() const { return config_to_json(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  return config_from_json(json::parse(text));
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like key.path=value: " + assignment);
  std::string path = "/" + assignment.substr(0, eq);
  for (auto& ch : path)
    if (ch == '.') ch = '/';
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings
  }
  json j = config_to_json(*this);
  j[json::json_pointer(path)] = value;
  *this = config_from_json(j);
}

void ExperimentConfig::validate() const {
  if (fed.n_clients < 1) throw std::invalid_argument("config: n_clients must be >= 1");
  if (rounds.rounds < 0) throw std::invalid_argument("config: rounds must be >= 0");
  if (rounds.data_fraction <= 0.0 || rounds.data_fraction > 1.0)
    throw std::invalid_argument("config: data_fraction must be in (0,1]");
  if (rounds.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (train.tau <= 0.0) throw std::invalid_argument("config: tau must be positive");
  if (train.weights.lambda_hcl < 0.0 || train.weights.lambda_kd < 0.0)
    throw std::invalid_argument("config: loss weights must be non-negative");
  if (train.alpha_inf < 0.0 || train.alpha_inf > 1.0)
    throw std::invalid_argument("config: alpha_inf must be in [0,1]");
  if (train.model.d_model % train.model.n_heads != 0)
    throw std::invalid_argument("config: d_model must divide by n_heads");
  if (pretrain_steps < 0 || pretrain_batch < 1)
    throw std::invalid_argument("config: bad pretrain settings");
}

ParameterSet build_initial_params(const ExperimentConfig& cfg, const Vocab& vocab) {
  ParameterSet ps;
  // the base is seeded independently of the experiment seed: every
  // federation starts from the same frozen pretrained decoder
  Rng base_rng(cfg.pretrain_seed);
  const bool cached = !cfg.base_checkpoint.empty() &&
                      std::filesystem::exists(cfg.base_checkpoint + ".bin");
  init_decoder_base(ps, cfg.train.model, vocab, base_rng, !cached);
  if (cached) {
    deserialize_params(load_checkpoint(cfg.base_checkpoint), ps);
  } else {
    auto corpus = gen_pretrain_corpus(cfg.pretrain_corpus_size, cfg.pretrain_seed);
    pretrain_base(ps, cfg.train.model, vocab, corpus, cfg.pretrain_steps, cfg.pretrain_batch,
                  cfg.pretrain_lr, cfg.pretrain_seed);
    if (!cfg.base_checkpoint.empty())
      save_checkpoint(serialize_params(ps, {"base"}), cfg.base_checkpoint);
  }
  set_partition_trainable(ps, "base", false);

  Rng rng = Rng(cfg.seed).fork(0x11);
  init_encoder_params(ps, cfg.train.model, rng);
  Rng arng = Rng(cfg.seed).fork(0x22);
  init_generic_adapter(ps, cfg.train.model.n_layers, cfg.train.model.d_model,
                       cfg.train.model.d_model, cfg.train.model.lora_rank, arng);
  init_specialized_adapter(ps, cfg.train.model.n_layers, cfg.train.model.d_model,
                           cfg.train.model.d_model, cfg.train.model.lora_rank, arng);
  inherit_from_generic(ps, cfg.train.model.n_layers);
  return ps;
}

void pretrain_and_save(const ExperimentConfig& cfg, const Vocab& vocab,
                       const std::string& path_prefix) {
  ParameterSet ps;
  Rng base_rng(cfg.pretrain_seed);
  init_decoder_base(ps, cfg.train.model, vocab, base_rng, true);
  auto corpus = gen_pretrain_corpus(cfg.pretrain_corpus_size, cfg.pretrain_seed);
  pretrain_base(ps, cfg.train.model, vocab, corpus, cfg.pretrain_steps, cfg.pretrain_batch,
                cfg.pretrain_lr, cfg.pretrain_seed);
  save_checkpoint(serialize_params(ps, {"base"}), path_prefix);
}

namespace {
EvalPoint evaluate_point(const FederationRun& run, long round, const ExperimentConfig& cfg,
                         const Federation& fed, const Vocab& vocab) {
  GenerationSettings gs;
  gs.model = cfg.train.model;
  gs.alpha_inf = cfg.train.alpha_inf;
  gs.no_prompt = cfg.train.no_prompt;
  gs.max_len = cfg.train.model.max_report_len;

  // clients evaluate with the freshly aggregated shared parameters
  ServerPayload payload = make_payload(run.server);
  std::vector<ClientState> synced = run.clients;
  for (auto& c : synced) {
    deserialize_params(payload.encoder, c.params);
    deserialize_params(payload.adapter_g, c.params);
  }
  EvalPoint p;
  p.round = round;
  p.in_domain = eval_in_domain(synced, fed.in_domain_test, gs, vocab);
  p.unseen = eval_unseen(run.server, fed.unseen_test, gs, vocab);
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}
}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Vocab vocab = build_vocab();
  const Federation fed = gen_federation(cfg.fed);
  const ParameterSet init = build_initial_params(cfg, vocab);

  RunArtifacts art;
  auto on_round = [&](const FederationRun& run, long round) {
    const bool last = round == cfg.rounds.rounds;
    if ((cfg.eval_every > 0 && round % cfg.eval_every == 0) || last)
      if (art.evals.empty() || art.evals.back().round != round)
        art.evals.push_back(evaluate_point(run, round, cfg, fed, vocab));
  };
  art.run = run_federation(fed, init, cfg.rounds, cfg.train, vocab, cfg.seed,
                           cfg.parallel_clients, on_round);
  if (cfg.rounds.rounds == 0)  // nothing trained: evaluate the initial model
    art.evals.push_back(evaluate_point(art.run, 0, cfg, fed, vocab));

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_text(out / "config.json", cfg.to_json_text() + "\n");
  {
    std::ostringstream os;
    for (const auto& r : art.run.history) os << r.to_json() << '\n';
    write_text(out / "history.jsonl", os.str());
  }
  {
    std::ostringstream os;
    os << "round," << EvalReport::csv_header() << '\n';
    for (const auto& p : art.evals) {
      os << p.round << ',' << p.in_domain.to_csv_row() << '\n';
      os << p.round << ',' << p.unseen.to_csv_row() << '\n';
    }
    write_text(out / "eval.csv", os.str());
  }
  write_text(out / "ledger.csv", art.run.ledger.to_csv());
  save_checkpoint(serialize_params(art.run.server.globals), (out / "server_final").string());
  for (const auto& c : art.run.clients)
    save_checkpoint(serialize_params(c.params, {"adapter_s"}),
                    (out / ("client" + std::to_string(c.client_id) + "_adapter_s")).string());
  return art;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base) {
  struct Variant {
    const char* name;
    bool TrainSettings::* flag;
  };
  const std::vector<Variant> variants = {
      {"full", nullptr},
      {"no_A_s", &TrainSettings::no_specialized},
      {"no_hcl", &TrainSettings::no_hcl},
      {"no_prompt", &TrainSettings::no_prompt},
      {"no_g2l", &TrainSettings::no_g2l},
      {"no_l2g", &TrainSettings::no_l2g},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ExperimentConfig cfg = base;
    if (v.flag) cfg.train.*(v.flag) = true;
    cfg.out_dir = (std::filesystem::path(base.out_dir) / v.name).string();
    RunArtifacts art = run_experiment(cfg);
    rows.push_back({v.name, art.evals.back()});
  }
  std::ostringstream os;
  os << "variant,round," << EvalReport::csv_header() << '\n';
  for (const auto& r : rows) {
    os << r.variant << ',' << r.final_eval.round << ',' << r.final_eval.in_domain.to_csv_row() << '\n';
    os << r.variant << ',' << r.final_eval.round << ',' << r.final_eval.unseen.to_csv_row() << '\n';
  }
  std::filesystem::create_directories(base.out_dir);
  write_text(std::filesystem::path(base.out_dir) / "ablation.csv", os.str());
  return rows;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const ExperimentConfig& base) {
  if (spec.values.size() < 2) throw std::invalid_argument("sweep: need at least 2 values");
  if (spec.repeats < 1) throw std::invalid_argument("sweep: repeats must be >= 1");
  const long total_samples =
      static_cast<long>(base.fed.n_clients) * base.fed.samples_per_client;

  std::vector<SweepRow> rows;
  for (double value : spec.values) {
    for (int rep = 0; rep < spec.repeats; ++rep) {
      ExperimentConfig cfg = base;
      cfg.seed = base.seed + static_cast<std::uint64_t>(rep);
      cfg.fed.seed = cfg.seed;
      if (spec.axis == "tau") {
        cfg.train.tau = value;
      } else if (spec.axis == "lambda_hcl") {
        cfg.train.weights.lambda_hcl = value;
      } else if (spec.axis == "lambda_kd") {
        cfg.train.weights.lambda_kd = value;
      } else if (spec.axis == "n_clients") {
        cfg.fed.n_clients = static_cast<int>(value);
        cfg.fed.samples_per_client =
            static_cast<int>(total_samples / static_cast<long>(value));
      } else if (spec.axis == "dirichlet_alpha") {
        cfg.fed.mode = PartitionMode::Dirichlet;
        cfg.fed.dirichlet_alpha = value;
      } else {
        throw std::invalid_argument("sweep: unknown axis '" + spec.axis + "'");
      }
      std::ostringstream cell;
      cell << spec.axis << '_' << value << "_s" << cfg.seed;
      cfg.out_dir = (std::filesystem::path(base.out_dir) / cell.str()).string();
      RunArtifacts art = run_experiment(cfg);
      SweepRow row;
      row.value = value;
      row.seed = cfg.seed;
      row.final_eval = art.evals.back();
      row.up_bytes_total = art.run.ledger.total("up");
      rows.push_back(std::move(row));
    }
  }
  std::ostringstream os;
  os << "axis,value,seed,round,split,bleu4,rouge_l,ce_f1,up_bytes\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << spec.axis << ',' << r.value << ',' << r.seed << ',' << r.final_eval.round
       << ",in_domain," << r.final_eval.in_domain.bleu4 << ',' << r.final_eval.in_domain.rouge
       << ',' << r.final_eval.in_domain.ce.f1 << ',' << r.up_bytes_total << '\n';
    os << spec.axis << ',' << r.value << ',' << r.seed << ',' << r.final_eval.round << ",unseen,"
       << r.final_eval.unseen.bleu4 << ',' << r.final_eval.unseen.rouge << ','
       << r.final_eval.unseen.ce.f1 << ',' << r.up_bytes_total << '\n';
  }
  std::filesystem::create_directories(base.out_dir);
  write_text(std::filesystem::path(base.out_dir) / "sweep.csv", os.str());
  return rows;
}

double label_chi_square(const Federation& fed) {
  const double eps = 1e-9;
  std::vector<double> pooled(kNumDiseases, 0.0);
  std::vector<std::vector<double>> per_client;
  for (const auto& c : fed.clients) {
    std::vector<double> counts(kNumDiseases, 0.0);
    for (const auto& s : c.train)
      for (int d = 0; d < kNumDiseases; ++d)
        if (s.labels[static_cast<std::size_t>(d)] == DiseaseState::POS) {
          counts[static_cast<std::size_t>(d)] += 1.0;
          pooled[static_cast<std::size_t>(d)] += 1.0;
        }
    per_client.push_back(std::move(counts));
  }
  auto normalize = [&](std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    if (total > 0.0)
      for (double& x : v) x /= total;
  };
  normalize(pooled);
  double chi = 0.0;
  for (auto& counts : per_client) {
    normalize(counts);
    for (int d = 0; d < kNumDiseases; ++d)
      chi += (counts[static_cast<std::size_t>(d)] - pooled[static_cast<std::size_t>(d)]) *
             (counts[static_cast<std::size_t>(d)] - pooled[static_cast<std::size_t>(d)]) /
             (pooled[static_cast<std::size_t>(d)] + eps);
  }
  return chi / static_cast<double>(per_client.size());
}

}  // namespace fedrg
