// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/federation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace fedrg {

const std::set<std::string> kEncoderCategory = {"encoder", "classifier", "projection"};
const std::set<std::string> kAdapterGCategory = {"adapter_g"};

// --- ledger -----------------------------------------------------------------

void CommLedger::add(long round, const std::string& direction, const std::string& category,
                     int client_id, long bytes) {
  records_.push_back({round, direction, category, client_id, bytes});
}

long CommLedger::total(const std::string& direction, const std::string& category) const {
  long sum = 0;
  for (const auto& r : records_)
    if ((direction.empty() || r.direction == direction) &&
        (category.empty() || r.category == category))
      sum += r.bytes;
  return sum;
}

std::map<std::string, long> CommLedger::by_category(const std::string& direction) const {
  std::map<std::string, long> out;
  for (const auto& r : records_)
    if (direction.empty() || r.direction == direction) out[r.category] += r.bytes;
  return out;
}

std::string CommLedger::to_csv() const {
  std::ostringstream os;
  os << "round,direction,category,client_id,bytes\n";
  for (const auto& r : records_)
    os << r.round << ',' << r.direction << ',' << r.category << ',' << r.client_id << ','
       << r.bytes << '\n';
  return os.str();
}

// --- initialization ---------------------------------------------------------

void initialize(const Federation& fed, const ParameterSet& init_params, int bank_capacity,
                ServerState& server, std::vector<ClientState>& clients) {
  for (const auto& c : fed.clients)
    if (c.train.empty())
      throw std::invalid_argument("initialize: client " + std::to_string(c.profile.client_id) +
                                  " has no training data");
  server = ServerState{};
  server.bank = MemoryBank(bank_capacity);
  for (const auto& [name, p] : init_params)
    if (p.partition != "adapter_s") server.globals[name] = p;

  clients.clear();
  clients.reserve(fed.clients.size());
  for (const auto& ds : fed.clients) {
    ClientState c;
    c.client_id = ds.profile.client_id;
    c.data = ds;
    c.params = init_params;  // identical initial copy everywhere
    c.bank_snapshot = MemoryBank(bank_capacity);
    clients.push_back(std::move(c));
  }
}

ServerPayload make_payload(const ServerState& server) {
  ServerPayload p;
  p.encoder = serialize_params(server.globals, kEncoderCategory);
  p.adapter_g = serialize_params(server.globals, kAdapterGCategory);
  p.bank_bytes = server.bank.serialize();
  p.round = server.round + 1;
  return p;
}

// --- local round ------------------------------------------------------------

namespace {
bool in_group1(const std::string& name, const Param& p) {
  return p.partition == "encoder" || p.partition == "classifier" || p.partition == "projection" ||
         p.partition == "adapter_g";
}

bool in_group2(const std::string& name, const Param& p) {
  return p.partition == "encoder" || p.partition == "classifier" || p.partition == "projection" ||
         name.rfind("adapter_s.loc.", 0) == 0;
}

GradMap filter_grads(const GradMap& grads, const ParameterSet& ps,
                     bool (*keep)(const std::string&, const Param&)) {
  GradMap out;
  for (const auto& [name, g] : grads)
    if (keep(name, ps.at(name))) out[name] = g;
  return out;
}

std::vector<int> label_states(const DiseaseLabelVector& labels) {
  std::vector<int> states(kNumDiseases);
  for (int d = 0; d < kNumDiseases; ++d)
    states[static_cast<std::size_t>(d)] = static_cast<int>(labels[static_cast<std::size_t>(d)]);
  return states;
}

std::vector<int> batch_prompts(const Sample& s, const Vocab& vocab, bool no_prompt) {
  if (no_prompt) return std::vector<int>(kNumDiseases, vocab.prompt[0]);  // all-[BLA]
  return labels_to_prompt(s.labels, vocab);
}
}  // namespace

ClientUpdate local_round(ClientState& client, const ServerPayload& payload, const RoundConfig& rc,
                         const TrainSettings& ts, const Vocab& vocab, std::uint64_t seed) {
  if (rc.data_fraction <= 0.0 || rc.data_fraction > 1.0)
    throw std::invalid_argument("local_round: data_fraction must be in (0,1]");
  // 1. sync shared params and the bank snapshot
  deserialize_params(payload.encoder, client.params);
  deserialize_params(payload.adapter_g, client.params);
  client.bank_snapshot = MemoryBank::deserialize(payload.bank_bytes, ts.bank_capacity);
  client.round = payload.round;
  // 2. specialized adapter re-inherits the freshly aggregated generic one
  inherit_from_generic(client.params, ts.model.n_layers);

  Rng rng(seed);
  const int n_train = static_cast<int>(client.data.train.size());
  int subset = std::clamp(static_cast<int>(std::lround(rc.data_fraction * n_train)), 1, n_train);
  std::vector<int> order(static_cast<std::size_t>(n_train));
  for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(subset));

  double sum_l1 = 0.0, sum_l2 = 0.0;
  long n_batches = 0;
  for (int epoch = 0; epoch < rc.local_epochs; ++epoch) {
    for (int b0 = 0; b0 < subset; b0 += rc.batch_size) {
      const int b1 = std::min(subset, b0 + rc.batch_size);
      const int n = b1 - b0;
      std::vector<const Sample*> batch;
      std::vector<Tensor> view1, view2;
      // supervised terms read the original image; the augmented pair feeds
      // the contrastive term only (augmentation relocates findings, which
      // would corrupt the classification target)
      const bool contrastive = !ts.no_hcl && ts.weights.lambda_hcl > 0.0;
      for (int i = b0; i < b1; ++i) {
        const Sample& s = client.data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        batch.push_back(&s);
        if (contrastive) {
          view1.push_back(augment(s.image, rng.next_u64()));
          view2.push_back(augment(s.image, rng.next_u64()));
        }
      }

      // phase 1: generic path
      {
        Tape t;
        std::vector<Tape::NodeId> pooled1, pooled2;
        Tape::NodeId ce_total = -1, lm_total = -1, kd_total = -1;
        for (int i = 0; i < n; ++i) {
          auto enc0 = encode(t, client.params, batch[static_cast<std::size_t>(i)]->image, ts.model);
          if (contrastive) {
            auto enc1 = encode(t, client.params, view1[static_cast<std::size_t>(i)], ts.model);
            auto enc2 = encode(t, client.params, view2[static_cast<std::size_t>(i)], ts.model);
            pooled1.push_back(enc1.pooled);
            pooled2.push_back(enc2.pooled);
          }
          auto ce = ce_loss(t, classify(t, client.params, enc0.pooled_raw),
                            label_states(batch[static_cast<std::size_t>(i)]->labels));
          ce_total = ce_total < 0 ? ce : t.add(ce_total, ce);
          const auto prompts = batch_prompts(*batch[static_cast<std::size_t>(i)], vocab, ts.no_prompt);
          const auto report = vocab.encode(batch[static_cast<std::size_t>(i)]->report);
          auto g = forward_lm(t, client.params, enc0.patches, prompts, report,
                              AdapterMode::generic_only(), ts.model, vocab);
          auto lm = lm_loss(t, g.logits, g.targets, g.mask);
          lm_total = lm_total < 0 ? lm : t.add(lm_total, lm);
          if (!ts.no_specialized && !ts.no_l2g) {
            auto s = forward_lm(t, client.params, enc0.patches, prompts, report,
                                AdapterMode::specialized_only(), ts.model, vocab);
            auto kd = distill_l2g(t, {s.hidden, g.hidden, s.logits, g.logits}, ts.kl_swapped);
            kd_total = kd_total < 0 ? kd : t.add(kd_total, kd);
          }
        }
        auto loss = t.add(t.scale(ce_total, 1.0 / n), t.scale(lm_total, 1.0 / n));
        const int bank_k = client.bank_snapshot.size();
        if (contrastive && 2 * (n - 1) + bank_k > 0) {
          auto hcl = hcl_loss(t, pooled1, pooled2, client.bank_snapshot, ts.tau,
                              ts.strict_exclude_positive);
          loss = t.add(loss, t.scale(hcl, ts.weights.lambda_hcl));
        }
        if (kd_total >= 0 && ts.weights.lambda_kd > 0.0)
          loss = t.add(loss, t.scale(t.scale(kd_total, 1.0 / n), ts.weights.lambda_kd));
        auto grads = t.backward(loss);
        if (ts.grad_probe) ts.grad_probe(client.client_id, client.round, 1, grads);
        client.optimizer.step(client.params, filter_grads(grads, client.params, in_group1), ts.lr);
        sum_l1 += t.val(loss).data[0];
      }

      // phase 2: specialized path
      if (!ts.no_specialized) {
        Tape t;
        std::vector<Tape::NodeId> pooled1, pooled2;
        Tape::NodeId ce_total = -1, lm_total = -1, kd_total = -1;
        for (int i = 0; i < n; ++i) {
          auto enc0 = encode(t, client.params, batch[static_cast<std::size_t>(i)]->image, ts.model);
          if (contrastive) {
            auto enc1 = encode(t, client.params, view1[static_cast<std::size_t>(i)], ts.model);
            auto enc2 = encode(t, client.params, view2[static_cast<std::size_t>(i)], ts.model);
            pooled1.push_back(enc1.pooled);
            pooled2.push_back(enc2.pooled);
          }
          auto ce = ce_loss(t, classify(t, client.params, enc0.pooled_raw),
                            label_states(batch[static_cast<std::size_t>(i)]->labels));
          ce_total = ce_total < 0 ? ce : t.add(ce_total, ce);
          const auto prompts = batch_prompts(*batch[static_cast<std::size_t>(i)], vocab, ts.no_prompt);
          const auto report = vocab.encode(batch[static_cast<std::size_t>(i)]->report);
          auto s = forward_lm(t, client.params, enc0.patches, prompts, report,
                              AdapterMode::specialized_only(), ts.model, vocab);
          auto lm = lm_loss(t, s.logits, s.targets, s.mask);
          lm_total = lm_total < 0 ? lm : t.add(lm_total, lm);
          if (!ts.no_g2l) {
            auto g = forward_lm(t, client.params, enc0.patches, prompts, report,
                                AdapterMode::generic_only(), ts.model, vocab);
            auto kd = distill_g2l(t, {s.hidden, g.hidden, s.logits, g.logits}, ts.kl_swapped);
            kd_total = kd_total < 0 ? kd : t.add(kd_total, kd);
          }
        }
        auto loss = t.add(t.scale(ce_total, 1.0 / n), t.scale(lm_total, 1.0 / n));
        const int bank_k = client.bank_snapshot.size();
        if (contrastive && 2 * (n - 1) + bank_k > 0) {
          auto hcl = hcl_loss(t, pooled1, pooled2, client.bank_snapshot, ts.tau,
                              ts.strict_exclude_positive);
          loss = t.add(loss, t.scale(hcl, ts.weights.lambda_hcl));
        }
        if (kd_total >= 0 && ts.weights.lambda_kd > 0.0)
          loss = t.add(loss, t.scale(t.scale(kd_total, 1.0 / n), ts.weights.lambda_kd));
        auto grads = t.backward(loss);
        if (ts.grad_probe) ts.grad_probe(client.client_id, client.round, 2, grads);
        client.optimizer.step(client.params, filter_grads(grads, client.params, in_group2), ts.lr);
        sum_l2 += t.val(loss).data[0];
      }
      ++n_batches;
    }
  }

  // bank contribution from this round's (un-augmented) subset
  MemoryBank contrib(ts.bank_vectors_per_round);
  if (!ts.no_hcl) {
    std::vector<std::vector<double>> pooled;
    for (int idx : order) {
      auto f = encode_nograd(client.params, client.data.train[static_cast<std::size_t>(idx)].image,
                             ts.model);
      pooled.push_back(f.pooled.data);
    }
    bank_push(contrib, pooled, client.client_id, client.round, ts.bank_vectors_per_round, rng);
  }

  ClientUpdate up;
  up.client_id = client.client_id;
  up.encoder = serialize_params(client.params, kEncoderCategory);
  up.adapter_g = serialize_params(client.params, kAdapterGCategory);
  up.bank_bytes = contrib.serialize();
  up.n_samples = n_train;
  up.mean_l1 = n_batches ? sum_l1 / static_cast<double>(n_batches) : 0.0;
  up.mean_l2 = n_batches ? sum_l2 / static_cast<double>(n_batches) : 0.0;
  return up;
}

// --- aggregation ------------------------------------------------------------

void aggregate(ServerState& server, const std::vector<ClientUpdate>& updates,
               bool uniform_weights) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

  double total_w = 0.0;
  for (const auto* u : sorted) total_w += uniform_weights ? 1.0 : static_cast<double>(u->n_samples);
  if (total_w <= 0.0) throw std::invalid_argument("aggregate: zero total weight");

  std::map<std::string, Tensor> acc;
  for (const auto* u : sorted) {
    const double w = (uniform_weights ? 1.0 : static_cast<double>(u->n_samples)) / total_w;
    ParameterSet tmp = server.globals;
    deserialize_params(u->encoder, tmp);
    deserialize_params(u->adapter_g, tmp);
    for (const auto& [name, p] : tmp) {
      if (!kEncoderCategory.count(p.partition) && !kAdapterGCategory.count(p.partition)) continue;
      auto it = acc.find(name);
      if (it == acc.end()) it = acc.emplace(name, Tensor::zeros(p.value.shape)).first;
      if (!it->second.same_shape(p.value))
        throw std::invalid_argument("aggregate: shape mismatch for " + name);
      for (std::size_t i = 0; i < p.value.data.size(); ++i) it->second.data[i] += w * p.value.data[i];
    }
  }
  for (auto& [name, v] : acc) server.globals.at(name).value = std::move(v);

  for (const auto* u : sorted) {
    MemoryBank contrib = MemoryBank::deserialize(u->bank_bytes, server.bank.capacity());
    for (const auto& e : contrib.entries()) server.bank.push_entry(e);
  }
  ++server.round;
}

// --- full run ---------------------------------------------------------------

std::string RoundReport::to_json() const {
  nlohmann::json j;
  j["round"] = round;
  j["client_l1"] = client_l1;
  j["client_l2"] = client_l2;
  j["up_bytes"] = up_bytes;
  j["down_bytes"] = down_bytes;
  return j.dump();
}

FederationRun run_federation(const Federation& fed, const ParameterSet& init_params,
                             const RoundConfig& rc, const TrainSettings& ts, const Vocab& vocab,
                             std::uint64_t seed, bool parallel,
                             const std::function<void(const FederationRun&, long)>& on_round) {
  FederationRun run;
  initialize(fed, init_params, ts.bank_capacity, run.server, run.clients);
  const int n = static_cast<int>(run.clients.size());

  // one-time distribution of the frozen base
  const long base_bytes = static_cast<long>(serialize_params(init_params, {"base"}).total_bytes());
  for (const auto& c : run.clients) run.ledger.add(0, "down", "base", c.client_id, base_bytes);

  for (int r = 0; r < rc.rounds; ++r) {
    ServerPayload payload = make_payload(run.server);
    RoundReport report;
    report.round = payload.round;
    for (const auto& c : run.clients) {
      run.ledger.add(payload.round, "down", "encoder", c.client_id,
                     static_cast<long>(payload.encoder.total_bytes()));
      run.ledger.add(payload.round, "down", "adapter_g", c.client_id,
                     static_cast<long>(payload.adapter_g.total_bytes()));
      run.ledger.add(payload.round, "down", "bank", c.client_id,
                     static_cast<long>(payload.bank_bytes.size()));
    }

    std::vector<ClientUpdate> updates(static_cast<std::size_t>(n));
    auto client_seed = [&](int i) {
      return Rng(seed).fork(static_cast<std::uint64_t>(run.clients[static_cast<std::size_t>(i)].client_id) * 0x10001ULL +
                            static_cast<std::uint64_t>(r))
          .next_u64();
    };
    if (parallel) {
      std::vector<std::thread> workers;
      for (int i = 0; i < n; ++i)
        workers.emplace_back([&, i] {
          updates[static_cast<std::size_t>(i)] = local_round(
              run.clients[static_cast<std::size_t>(i)], payload, rc, ts, vocab, client_seed(i));
        });
      for (auto& w : workers) w.join();
    } else {
      for (int i = 0; i < n; ++i)
        updates[static_cast<std::size_t>(i)] = local_round(
            run.clients[static_cast<std::size_t>(i)], payload, rc, ts, vocab, client_seed(i));
    }

    for (const auto& u : updates) {
      run.ledger.add(payload.round, "up", "encoder", u.client_id,
                     static_cast<long>(u.encoder.total_bytes()));
      run.ledger.add(payload.round, "up", "adapter_g", u.client_id,
                     static_cast<long>(u.adapter_g.total_bytes()));
      run.ledger.add(payload.round, "up", "bank", u.client_id,
                     static_cast<long>(u.bank_bytes.size()));
      report.client_l1.push_back(u.mean_l1);
      report.client_l2.push_back(u.mean_l2);
    }
    aggregate(run.server, updates, ts.uniform_fedavg);

    for (const auto& rec : run.ledger.records())
      if (rec.round == payload.round)
        (rec.direction == "up" ? report.up_bytes : report.down_bytes) += rec.bytes;
    run.history.push_back(std::move(report));
    if (on_round) on_round(run, payload.round);
  }
  return run;
}

// --- accounting helpers -----------------------------------------------------

std::map<std::string, long> comm_cost(const std::string& policy, const ParameterSet& params,
                                      int bank_vectors, int feature_dim) {
  // serialized bank size: 8-byte header + per entry (id + round + f32 vector)
  const long bank_bytes =
      bank_vectors > 0 ? 8 + static_cast<long>(bank_vectors) * (8 + 4L * feature_dim) : 0;
  std::map<std::string, long> out;
  if (policy == "full_model") {
    out["encoder"] = static_cast<long>(serialize_params(params, kEncoderCategory).total_bytes());
    out["base"] = static_cast<long>(serialize_params(params, {"base"}).total_bytes());
    out["adapter_g"] = static_cast<long>(serialize_params(params, kAdapterGCategory).total_bytes());
    out["adapter_s"] = static_cast<long>(serialize_params(params, {"adapter_s"}).total_bytes());
    out["bank"] = bank_bytes;
    return out;
  }
  if (policy == "fedmrg_selective") {
    out["encoder"] = static_cast<long>(serialize_params(params, kEncoderCategory).total_bytes());
    out["adapter_g"] = static_cast<long>(serialize_params(params, kAdapterGCategory).total_bytes());
    out["bank"] = bank_bytes;
    return out;
  }
  throw std::invalid_argument("comm_cost: unknown policy '" + policy + "'");
}

TransferEstimate estimate_transfer_time(long bytes, double client_bandwidth, int n_clients,
                                        double server_bandwidth) {
  if (client_bandwidth <= 0.0 || server_bandwidth <= 0.0)
    throw std::invalid_argument("estimate_transfer_time: bandwidth must be positive");
  TransferEstimate e;
  e.per_client_seconds = static_cast<double>(bytes) / client_bandwidth;
  e.server_fanin_seconds = static_cast<double>(n_clients) * static_cast<double>(bytes) / server_bandwidth;
  return e;
}

// --- evaluation protocols ---------------------------------------------------

std::vector<std::string> generate_report(const ParameterSet& params, const Tensor& image,
                                         const AdapterMode& mode, const GenerationSettings& gs,
                                         const Vocab& vocab) {
  auto feats = encode_nograd(params, image, gs.model);
  auto labels = argmax_labels(classify_nograd(params, feats));
  std::vector<int> prompts = gs.no_prompt ? std::vector<int>(kNumDiseases, vocab.prompt[0])
                                          : labels_to_prompt(labels, vocab);
  auto ids = generate(params, feats, prompts, mode, gs.model, vocab, gs.max_len);
  return vocab.decode(ids);
}

namespace {
EvalReport eval_params(const std::string& split, const ParameterSet& params,
                       const std::vector<Sample>& test_set, const AdapterMode& mode,
                       const GenerationSettings& gs, const Vocab& vocab) {
  std::vector<TokenSeq> cands, refs;
  std::vector<DiseaseLabelVector> pred_labels, ref_labels;
  for (const auto& s : test_set) {
    auto report = generate_report(params, s.image, mode, gs, vocab);
    pred_labels.push_back(oracle_label(report));
    cands.push_back(std::move(report));
    refs.push_back(s.report);
    ref_labels.push_back(s.labels);
  }
  return evaluate_outputs(split, cands, refs, pred_labels, ref_labels);
}
}  // namespace

EvalReport eval_in_domain(const std::vector<ClientState>& clients,
                          const std::vector<Sample>& test_set, const GenerationSettings& gs,
                          const Vocab& vocab) {
  if (clients.empty()) throw std::invalid_argument("eval_in_domain: no clients");
  EvalReport avg;
  avg.split = "in_domain";
  avg.n_samples = static_cast<int>(test_set.size());
  for (const auto& c : clients) {
    EvalReport r = eval_params("in_domain", c.params, test_set,
                               AdapterMode::combined(gs.alpha_inf), gs, vocab);
    avg.bleu1 += r.bleu1;
    avg.bleu2 += r.bleu2;
    avg.bleu3 += r.bleu3;
    avg.bleu4 += r.bleu4;
    avg.rouge += r.rouge;
    avg.ce.precision += r.ce.precision;
    avg.ce.recall += r.ce.recall;
    avg.ce.f1 += r.ce.f1;
  }
  const double n = static_cast<double>(clients.size());
  avg.bleu1 /= n;
  avg.bleu2 /= n;
  avg.bleu3 /= n;
  avg.bleu4 /= n;
  avg.rouge /= n;
  avg.ce.precision /= n;
  avg.ce.recall /= n;
  avg.ce.f1 /= n;
  return avg;
}

EvalReport eval_unseen(const ServerState& server, const std::vector<Sample>& test_set,
                       const GenerationSettings& gs, const Vocab& vocab) {
  return eval_params("unseen", server.globals, test_set, AdapterMode::generic_only(), gs, vocab);
}

}  // namespace fedrg
