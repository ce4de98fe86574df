// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedrg/federation.hpp"

namespace fedrg {

struct ExperimentConfig {
  FederationSpec fed;
  RoundConfig rounds;
  TrainSettings train;
  int eval_every = 10;  // 0 = final evaluation only
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool parallel_clients = true;

  // decoder pretraining (base LM on the neutral-style corpus)
  int pretrain_steps = 2000;
  int pretrain_batch = 8;
  double pretrain_lr = 3e-3;
  int pretrain_corpus_size = 512;
  std::uint64_t pretrain_seed = 7;
  std::string base_checkpoint;  // load/store path prefix; empty = pretrain in-process

  std::string to_json_text() const;
  static ExperimentConfig from_json_text(const std::string& text);
  // dotted-path override, e.g. "rounds.rounds=5" or "train.tau=0.05"
  void apply_override(const std::string& assignment);
  void validate() const;
};

// Fresh parameter set: pretrained (or cached) frozen base + encoder heads +
// both adapters, derived from cfg.seed.
ParameterSet build_initial_params(const ExperimentConfig& cfg, const Vocab& vocab);

// Pretrains the decoder base alone and saves it to `path_prefix`.
void pretrain_and_save(const ExperimentConfig& cfg, const Vocab& vocab,
                       const std::string& path_prefix);

struct EvalPoint {
  long round = 0;
  EvalReport in_domain;
  EvalReport unseen;
};

struct RunArtifacts {
  FederationRun run;
  std::vector<EvalPoint> evals;
};

// Full experiment: generate data, train, evaluate at cadence, write
// history.jsonl / eval.csv / ledger.csv / final checkpoints under out_dir.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
  std::string variant;
  EvalPoint final_eval;
};

// Full model plus the five single-mechanism removals, shared seeds; writes
// ablation.csv.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base);

struct SweepSpec {
  std::string axis;  // tau | lambda_hcl | lambda_kd | n_clients | dirichlet_alpha
  std::vector<double> values;
  int repeats = 1;  // distinct seeds per value
};

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  EvalPoint final_eval;
  long up_bytes_total = 0;
};

// Cartesian product of values x repeats; writes sweep.csv. The n_clients
// axis rescales per-client samples to keep the federation total fixed.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const ExperimentConfig& base);

// Heterogeneity measure: chi-square distance between per-client positive
// label distributions and the pooled distribution, averaged over clients.
double label_chi_square(const Federation& fed);

}  // namespace fedrg
