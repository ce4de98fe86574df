// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "fedrg/experiments.hpp"
#include "fedrg/federation.hpp"

using namespace fedrg;

namespace {
ExperimentConfig tiny_config(std::uint64_t seed = 3) {
  ExperimentConfig cfg;
  cfg.fed.n_clients = 2;
  cfg.fed.samples_per_client = 16;
  cfg.fed.test_per_client = 3;
  cfg.fed.unseen_test_size = 4;
  cfg.fed.seed = seed;
  cfg.rounds.rounds = 2;
  cfg.rounds.batch_size = 4;
  cfg.rounds.data_fraction = 0.3;
  cfg.pretrain_steps = 4;
  cfg.pretrain_batch = 4;
  cfg.pretrain_corpus_size = 16;
  cfg.seed = seed;
  cfg.eval_every = 0;
  return cfg;
}

struct TinyWorld {
  Vocab vocab = build_vocab();
  ExperimentConfig cfg;
  Federation fed;
  ParameterSet init;
  TinyWorld(std::uint64_t seed = 3) : cfg(tiny_config(seed)), fed(gen_federation(cfg.fed)) {
    init = build_initial_params(cfg, vocab);
  }
};
}  // namespace

TEST_CASE("initialization hands every client bit-identical parameters") {
  TinyWorld w;
  ServerState server;
  std::vector<ClientState> clients;
  initialize(w.fed, w.init, 64, server, clients);
  REQUIRE(clients.size() == 2);
  Checkpoint ref = serialize_params(clients[0].params);
  for (const auto& c : clients) {
    CHECK(serialize_params(c.params).blob == ref.blob);
    for (const auto& [name, p] : c.params)
      if (p.partition == "base") CHECK(!p.trainable);
  }
  // the server never holds a specialized adapter
  for (const auto& [name, p] : server.globals) CHECK(p.partition != "adapter_s");
  CHECK(server.round == 0);
}

TEST_CASE("aggregate matches the hand-computed weighted mean exactly") {
  // 3 clients, 2 shared scalars; weights n = 1, 3, 4
  ParameterSet proto;
  proto["enc.w"] = {Tensor::scalar(0.0), true, "encoder"};
  proto["ad.g"] = {Tensor::scalar(0.0), true, "adapter_g"};
  ServerState server;
  server.globals = proto;
  server.bank = MemoryBank(8);

  auto mk = [&](int id, long n, double enc, double ad) {
    ParameterSet ps = proto;
    ps.at("enc.w").value.data[0] = enc;
    ps.at("ad.g").value.data[0] = ad;
    ClientUpdate u;
    u.client_id = id;
    u.n_samples = n;
    u.encoder = serialize_params(ps, kEncoderCategory);
    u.adapter_g = serialize_params(ps, kAdapterGCategory);
    u.bank_bytes = MemoryBank(8).serialize();
    return u;
  };
  std::vector<ClientUpdate> ups = {mk(0, 1, 0.0, 8.0), mk(1, 3, 4.0, 0.0), mk(2, 4, 2.0, 1.0)};
  aggregate(server, ups, false);
  // enc: (1*0 + 3*4 + 4*2)/8 = 2.5 ; ad: (1*8 + 3*0 + 4*1)/8 = 1.5
  CHECK(server.globals.at("enc.w").value.data[0] == 2.5);
  CHECK(server.globals.at("ad.g").value.data[0] == 1.5);
  CHECK(server.round == 1);

  // n1 = 1, n2 = 3, params 0 and 4 -> 3
  ServerState s2;
  s2.globals = proto;
  s2.bank = MemoryBank(8);
  std::vector<ClientUpdate> two = {mk(0, 1, 0.0, 0.0), mk(1, 3, 4.0, 4.0)};
  aggregate(s2, two, false);
  CHECK(s2.globals.at("enc.w").value.data[0] == 3.0);

  // uniform weighting ignores n
  ServerState s3;
  s3.globals = proto;
  s3.bank = MemoryBank(8);
  aggregate(s3, two, true);
  CHECK(s3.globals.at("enc.w").value.data[0] == 2.0);
}

TEST_CASE("aggregation is permutation invariant, bit for bit") {
  TinyWorld w;
  ServerState server;
  std::vector<ClientState> clients;
  initialize(w.fed, w.init, 64, server, clients);
  ServerPayload payload = make_payload(server);
  RoundConfig rc = w.cfg.rounds;
  std::vector<ClientUpdate> ups;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    ClientState c = clients[i];
    ups.push_back(local_round(c, payload, rc, w.cfg.train, w.vocab, 1000 + i));
  }
  Rng rng(5);
  std::vector<std::vector<std::uint8_t>> blobs;
  for (int shuffle = 0; shuffle < 10; ++shuffle) {
    std::vector<ClientUpdate> perm = ups;
    rng.shuffle(perm);
    ServerState s;
    s.globals = server.globals;
    s.bank = MemoryBank(64);
    aggregate(s, perm, false);
    blobs.push_back(serialize_params(s.globals).blob);
  }
  for (const auto& b : blobs) CHECK(b == blobs[0]);
}

TEST_CASE("identical updates are a FedAvg fixed point") {
  TinyWorld w;
  ServerState server;
  std::vector<ClientState> clients;
  initialize(w.fed, w.init, 64, server, clients);
  ServerPayload payload = make_payload(server);
  ClientState c = clients[0];
  ClientUpdate u = local_round(c, payload, w.cfg.rounds, w.cfg.train, w.vocab, 9);
  ClientUpdate u2 = u;
  u2.client_id = 1;
  Checkpoint before_enc = u.encoder;
  aggregate(server, {u, u2}, false);
  Checkpoint after = serialize_params(server.globals, kEncoderCategory);
  CHECK(after.blob == before_enc.blob);
}

TEST_CASE("local round is a pure function of state, payload and seed") {
  TinyWorld w;
  ServerState server;
  std::vector<ClientState> clients;
  initialize(w.fed, w.init, 64, server, clients);
  ServerPayload payload = make_payload(server);
  ClientState a = clients[0], b = clients[0];
  ClientUpdate ua = local_round(a, payload, w.cfg.rounds, w.cfg.train, w.vocab, 77);
  ClientUpdate ub = local_round(b, payload, w.cfg.rounds, w.cfg.train, w.vocab, 77);
  CHECK(ua.encoder.blob == ub.encoder.blob);
  CHECK(ua.adapter_g.blob == ub.adapter_g.blob);
  CHECK(ua.bank_bytes == ub.bank_bytes);
  CHECK(ua.mean_l1 == ub.mean_l1);
  CHECK(ua.mean_l2 == ub.mean_l2);
  // a different seed takes a different trajectory
  ClientState c = clients[0];
  ClientUpdate uc = local_round(c, payload, w.cfg.rounds, w.cfg.train, w.vocab, 78);
  CHECK(uc.encoder.blob != ua.encoder.blob);
}

TEST_CASE("parallel and sequential execution produce identical runs") {
  TinyWorld w;
  FederationRun seq = run_federation(w.fed, w.init, w.cfg.rounds, w.cfg.train, w.vocab, 11, false);
  FederationRun par = run_federation(w.fed, w.init, w.cfg.rounds, w.cfg.train, w.vocab, 11, true);
  REQUIRE(seq.history.size() == par.history.size());
  for (std::size_t i = 0; i < seq.history.size(); ++i) {
    CHECK(seq.history[i].to_json() == par.history[i].to_json());
  }
  CHECK(serialize_params(seq.server.globals).blob == serialize_params(par.server.globals).blob);
  for (std::size_t i = 0; i < seq.clients.size(); ++i)
    CHECK(serialize_params(seq.clients[i].params).blob ==
          serialize_params(par.clients[i].params).blob);
}

TEST_CASE("zero rounds leave the initial state untouched") {
  TinyWorld w;
  RoundConfig rc = w.cfg.rounds;
  rc.rounds = 0;
  FederationRun run = run_federation(w.fed, w.init, rc, w.cfg.train, w.vocab, 11, false);
  CHECK(run.history.empty());
  ParameterSet expect;
  for (const auto& [name, p] : w.init)
    if (p.partition != "adapter_s") expect[name] = p;
  CHECK(serialize_params(run.server.globals).blob == serialize_params(expect).blob);
}

TEST_CASE("the ledger shows selective sharing only") {
  TinyWorld w;
  FederationRun run = run_federation(w.fed, w.init, w.cfg.rounds, w.cfg.train, w.vocab, 11, false);
  long base_after_init = 0;
  for (const auto& rec : run.ledger.records()) {
    CHECK(rec.category != "adapter_s");
    if (rec.category == "base") {
      CHECK(rec.round == 0);
      CHECK(rec.direction == "down");
    }
    if (rec.direction == "up") CHECK(rec.category != "base");
    if (rec.category == "base" && rec.round > 0) base_after_init += rec.bytes;
  }
  CHECK(base_after_init == 0);
  CHECK(run.ledger.total("up", "encoder") > 0);
  CHECK(run.ledger.total("up", "adapter_g") > 0);
}

TEST_CASE("empty client data fails at initialization") {
  TinyWorld w;
  Federation broken = w.fed;
  broken.clients[0].train.clear();
  ServerState server;
  std::vector<ClientState> clients;
  CHECK_THROWS(initialize(broken, w.init, 64, server, clients));
}

TEST_CASE("comm cost: selective payload is far below the full model") {
  TinyWorld w;
  auto full = comm_cost("full_model", w.init, 8, 64);
  auto sel = comm_cost("fedmrg_selective", w.init, 8, 64);
  long full_total = 0, sel_total = 0;
  for (const auto& [k, v] : full) full_total += v;
  for (const auto& [k, v] : sel) sel_total += v;
  CHECK(sel_total < full_total);
  CHECK(sel.count("base") == 0);
  CHECK(sel.count("adapter_s") == 0);
  CHECK_THROWS(comm_cost("bogus", w.init, 8, 64));
}

TEST_CASE("adapter payload bytes follow the rank formula and scale with rank") {
  TinyWorld w;
  const auto& m = w.cfg.train.model;
  const long expect_values =
      static_cast<long>(adapter_sites(m.n_layers).size()) *
      site_param_count(m.d_model, m.d_model, m.lora_rank) * 4;
  Checkpoint r1 = serialize_params(w.init, kAdapterGCategory);
  CHECK(static_cast<long>(r1.blob.size()) == expect_values);

  ExperimentConfig doubled = w.cfg;
  doubled.train.model.lora_rank = m.lora_rank * 2;
  ParameterSet p2 = build_initial_params(doubled, w.vocab);
  Checkpoint r2 = serialize_params(p2, kAdapterGCategory);
  CHECK(r2.blob.size() == 2 * r1.blob.size());  // blob only; the manifest is excluded
}

TEST_CASE("transfer time estimates") {
  auto e = estimate_transfer_time(1000000000L, 1e9, 1, 1e9);
  CHECK(e.per_client_seconds == doctest::Approx(1.0));
  CHECK(e.server_fanin_seconds == doctest::Approx(1.0));
  auto f = estimate_transfer_time(500, 100.0, 10, 100.0);
  CHECK(f.per_client_seconds == doctest::Approx(5.0));
  CHECK(f.server_fanin_seconds == doctest::Approx(50.0));  // fan-in is 10x a single client
  CHECK_THROWS(estimate_transfer_time(1, 0.0, 1, 1.0));
}

TEST_CASE("evaluation protocols stay in range and unseen uses the server only") {
  TinyWorld w;
  FederationRun run = run_federation(w.fed, w.init, w.cfg.rounds, w.cfg.train, w.vocab, 11, false);
  GenerationSettings gs;
  gs.model = w.cfg.train.model;
  gs.max_len = w.cfg.train.model.max_report_len;
  EvalReport in = eval_in_domain(run.clients, w.fed.in_domain_test, gs, w.vocab);
  EvalReport un = eval_unseen(run.server, w.fed.unseen_test, gs, w.vocab);
  for (double v : {in.bleu1, in.bleu4, in.rouge, in.ce.f1, un.bleu1, un.rouge, un.ce.f1}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
  CHECK(in.split == "in_domain");
  CHECK(un.split == "unseen");
  CHECK(in.n_samples == static_cast<int>(w.fed.in_domain_test.size()));
}
