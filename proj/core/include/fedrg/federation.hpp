// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedrg/checkpoint.hpp"
#include "fedrg/corpus.hpp"
#include "fedrg/evalmetrics.hpp"
#include "fedrg/losses.hpp"
#include "fedrg/membank.hpp"
#include "fedrg/model.hpp"
#include "fedrg/optim.hpp"

namespace fedrg {

struct RoundConfig {
  double data_fraction = 0.13;  // share of the client's train split per round
  int batch_size = 8;
  int local_epochs = 1;
  int rounds = 60;
};

struct TrainSettings {
  ModelConfig model;
  LossWeights weights;
  double tau = 0.07;
  double lr = 2e-3;
  double alpha_inf = 0.5;
  int bank_vectors_per_round = 8;
  int bank_capacity = 512;
  // ablation switches (each removes one mechanism, shapes stay fixed)
  bool no_specialized = false;
  bool no_hcl = false;
  bool no_prompt = false;
  bool no_g2l = false;
  bool no_l2g = false;
  // fidelity switches
  bool strict_exclude_positive = false;
  bool kl_swapped = false;
  bool uniform_fedavg = false;
  // test hook: called with the unfiltered gradients of each optimization
  // phase (1 = generic path, 2 = specialized path)
  std::function<void(int client, long round, int phase, const GradMap&)> grad_probe;
};

// --- communication accounting ----------------------------------------------

struct CommRecord {
  long round = 0;
  std::string direction;  // "down" | "up"
  std::string category;   // "encoder" | "adapter_g" | "bank" | "base"
  int client_id = 0;
  long bytes = 0;
};

class CommLedger {
 public:
  void add(long round, const std::string& direction, const std::string& category, int client_id,
           long bytes);
  const std::vector<CommRecord>& records() const { return records_; }
  long total(const std::string& direction = "", const std::string& category = "") const;
  std::map<std::string, long> by_category(const std::string& direction = "") const;
  std::string to_csv() const;

 private:
  std::vector<CommRecord> records_;
};

// --- protocol state ---------------------------------------------------------

// Shared parameters travel as the "encoder" category (encoder trunk plus the
// classifier and projection heads) and the "adapter_g" category. The frozen
// base moves once, at initialization. Specialized adapters never move.
extern const std::set<std::string> kEncoderCategory;
extern const std::set<std::string> kAdapterGCategory;

struct ServerState {
  ParameterSet globals;  // encoder/classifier/projection/base/adapter_g
  MemoryBank bank;
  long round = 0;
};

struct ClientState {
  int client_id = 0;
  ClientDataset data;
  ParameterSet params;  // globals plus adapter_s.{inh,loc}
  MemoryBank bank_snapshot;
  AdamW optimizer;
  long round = 0;
};

struct ServerPayload {
  Checkpoint encoder;    // shared encoder-side params
  Checkpoint adapter_g;  // generic adapter
  std::vector<std::uint8_t> bank_bytes;
  long round = 0;
};

struct ClientUpdate {
  int client_id = 0;
  Checkpoint encoder;
  Checkpoint adapter_g;
  std::vector<std::uint8_t> bank_bytes;
  long n_samples = 0;  // FedAvg weight (client train-split size)
  double mean_l1 = 0.0, mean_l2 = 0.0;
};

// --- operations -------------------------------------------------------------

// Builds the server and one client per dataset, all from the same
// initialized parameter set (pretrained frozen base + fresh heads/adapters);
// the specialized adapter inherits the generic one.
void initialize(const Federation& fed, const ParameterSet& init_params, int bank_capacity,
                ServerState& server, std::vector<ClientState>& clients);

ServerPayload make_payload(const ServerState& server);

// One client round: sync to the payload, re-inherit the specialized adapter,
// then per mini-batch optimize the generic path (encoder/classifier/
// projection/adapter_g) and the specialized path (encoder/classifier/
// projection/adapter_s.loc) alternately. Pure in (state, payload, settings,
// seed); the state is advanced in place.
ClientUpdate local_round(ClientState& client, const ServerPayload& payload, const RoundConfig& rc,
                         const TrainSettings& ts, const Vocab& vocab, std::uint64_t seed);

// Sample-count-weighted FedAvg over the shared categories plus a bank merge;
// increments the round counter. Permutation invariant.
void aggregate(ServerState& server, const std::vector<ClientUpdate>& updates, bool uniform_weights);

struct RoundReport {
  long round = 0;
  std::vector<double> client_l1, client_l2;
  long up_bytes = 0, down_bytes = 0;
  std::string to_json() const;
};

struct FederationRun {
  std::vector<RoundReport> history;
  ServerState server;
  std::vector<ClientState> clients;
  CommLedger ledger;
};

// distribute -> local rounds (parallel or sequential, identical results) ->
// aggregate, for rc.rounds rounds. `on_round` (optional) fires after each
// aggregation with the evolving run state.
FederationRun run_federation(const Federation& fed, const ParameterSet& init_params,
                             const RoundConfig& rc, const TrainSettings& ts, const Vocab& vocab,
                             std::uint64_t seed, bool parallel,
                             const std::function<void(const FederationRun&, long)>& on_round = {});

// Byte-exact per-round, per-client payload by category. "full_model" ships
// every parameter; "fedmrg_selective" ships the shared categories plus the
// bank contribution.
std::map<std::string, long> comm_cost(const std::string& policy, const ParameterSet& params,
                                      int bank_vectors, int feature_dim);

struct TransferEstimate {
  double per_client_seconds = 0.0;
  double server_fanin_seconds = 0.0;
};
TransferEstimate estimate_transfer_time(long bytes, double client_bandwidth, int n_clients,
                                        double server_bandwidth);

// --- evaluation protocols ---------------------------------------------------

struct GenerationSettings {
  ModelConfig model;
  double alpha_inf = 0.5;
  bool no_prompt = false;
  int max_len = 48;
};

// Classifier -> prompt tokens -> greedy decode for one parameter set.
std::vector<std::string> generate_report(const ParameterSet& params, const Tensor& image,
                                         const AdapterMode& mode, const GenerationSettings& gs,
                                         const Vocab& vocab);

// In-federation protocol: every client decodes the shared test set with its
// combined adapters; per-client reports are averaged.
EvalReport eval_in_domain(const std::vector<ClientState>& clients,
                          const std::vector<Sample>& test_set, const GenerationSettings& gs,
                          const Vocab& vocab);

// Unseen-domain protocol: server-side parameters with the generic adapter
// only. Takes no client state, so specialized adapters are out of reach by
// construction.
EvalReport eval_unseen(const ServerState& server, const std::vector<Sample>& test_set,
                       const GenerationSettings& gs, const Vocab& vocab);

}  // namespace fedrg
