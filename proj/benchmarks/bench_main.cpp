// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fedrg/experiments.hpp"

using namespace fedrg;

namespace {

struct Fixture {
  ModelConfig cfg;
  Vocab vocab = build_vocab();
  ParameterSet ps;
  Tensor image = Tensor::zeros({kImageSize, kImageSize});
  std::vector<int> prompt;
  std::vector<int> report;

  Fixture() {
    Rng rng(17);
    init_encoder_params(ps, cfg, rng);
    init_decoder_base(ps, cfg, vocab, rng, false);
    init_generic_adapter(ps, cfg.n_layers, cfg.d_model, cfg.d_model, cfg.lora_rank, rng);
    init_specialized_adapter(ps, cfg.n_layers, cfg.d_model, cfg.d_model, cfg.lora_rank, rng);
    inherit_from_generic(ps, cfg.n_layers);
    for (auto& x : image.data) x = rng.uniform();
    DiseaseLabelVector labels{};
    labels[3] = DiseaseState::POS;
    prompt = labels_to_prompt(labels, vocab);
    report = vocab.encode(render_report(labels, 0));
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void bm_encode_nograd(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(encode_nograd(f.ps, f.image, f.cfg));
}
BENCHMARK(bm_encode_nograd);

void bm_forward_backward(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    Tape t;
    auto enc = encode(t, f.ps, f.image, f.cfg);
    auto out = forward_lm(t, f.ps, enc.patches, f.prompt, f.report,
                          AdapterMode::generic_only(), f.cfg, f.vocab);
    auto loss = lm_loss(t, out.logits, out.targets, out.mask);
    benchmark::DoNotOptimize(t.backward(loss));
  }
}
BENCHMARK(bm_forward_backward);

void bm_generate(benchmark::State& state) {
  auto& f = fixture();
  auto feats = encode_nograd(f.ps, f.image, f.cfg);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        generate(f.ps, feats, f.prompt, AdapterMode::combined(0.5), f.cfg, f.vocab, 48));
}
BENCHMARK(bm_generate);

void bm_local_round(benchmark::State& state) {
  auto& f = fixture();
  FederationSpec spec;
  spec.n_clients = 2;
  spec.samples_per_client = 32;
  spec.test_per_client = 1;
  spec.unseen_test_size = 1;
  Federation fed = gen_federation(spec);
  ServerState server;
  std::vector<ClientState> clients;
  initialize(fed, f.ps, 64, server, clients);
  ServerPayload payload = make_payload(server);
  RoundConfig rc;
  rc.data_fraction = 0.25;
  rc.batch_size = 8;
  TrainSettings ts;
  ts.model = f.cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ClientState c = clients[0];
    benchmark::DoNotOptimize(local_round(c, payload, rc, ts, f.vocab, seed++));
  }
}
BENCHMARK(bm_local_round)->Unit(benchmark::kMillisecond);

void bm_hcl_loss(benchmark::State& state) {
  auto& f = fixture();
  Rng rng(23);
  MemoryBank bank(64);
  for (int i = 0; i < 64; ++i) {
    BankEntry e;
    e.vec.assign(static_cast<std::size_t>(f.cfg.channels), 0.0);
    double n = 0.0;
    for (auto& v : e.vec) {
      v = rng.normal();
      n += v * v;
    }
    n = std::sqrt(n);
    for (auto& v : e.vec) v /= n;
    bank.push_entry(std::move(e));
  }
  const int batch = 16;
  for (auto _ : state) {
    Tape t;
    std::vector<Tape::NodeId> a, b;
    for (int i = 0; i < batch; ++i) {
      Tensor x = Tensor::randn({1, f.cfg.channels}, rng);
      Tensor y = Tensor::randn({1, f.cfg.channels}, rng);
      a.push_back(t.l2_normalize_row(t.constant(x)));
      b.push_back(t.l2_normalize_row(t.constant(y)));
    }
    benchmark::DoNotOptimize(t.val(hcl_loss(t, a, b, bank, 0.07)));
  }
}
BENCHMARK(bm_hcl_loss);

void bm_serialize_roundtrip(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    Checkpoint c = serialize_params(f.ps);
    deserialize_params(c, f.ps);
    benchmark::DoNotOptimize(c.blob.data());
  }
}
BENCHMARK(bm_serialize_roundtrip);

void bm_bleu_corpus(benchmark::State& state) {
  Rng rng(31);
  std::vector<TokenSeq> cands, refs;
  for (int i = 0; i < 200; ++i) {
    DiseaseLabelVector labels{};
    labels[static_cast<std::size_t>(rng.below(kNumDiseases))] = DiseaseState::POS;
    refs.push_back(render_report(labels, static_cast<int>(rng.below(4))));
    cands.push_back(render_report(labels, static_cast<int>(rng.below(4))));
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(cands, refs, 4));
}
BENCHMARK(bm_bleu_corpus);

}  // namespace

BENCHMARK_MAIN();
