// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fedrg/membank.hpp"
#include "helpers.hpp"

using namespace fedrg;

namespace {
std::vector<double> unit_vec(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

Tensor unit_row(Rng& rng, int dim) {
  auto v = unit_vec(rng, dim);
  return Tensor({1, dim}, std::move(v));
}
}  // namespace

TEST_CASE("memory bank rejects non-unit vectors and evicts FIFO") {
  MemoryBank bank(3);
  Rng rng(1);
  BankEntry bad;
  bad.vec = {0.5, 0.5};
  CHECK_THROWS(bank.push_entry(bad));
  for (int i = 0; i < 5; ++i) {
    BankEntry e;
    e.vec = unit_vec(rng, 4);
    e.client_id = i;
    e.round = i / 2;
    bank.push_entry(std::move(e));
  }
  CHECK(bank.size() == 3);
  // oldest (rounds 0) evicted first
  CHECK(bank.entries()[0].client_id == 2);
  CHECK(bank.entries()[1].client_id == 3);
  CHECK(bank.entries()[2].client_id == 4);
}

TEST_CASE("memory bank serialization round-trips") {
  MemoryBank bank(8);
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    BankEntry e;
    e.vec = unit_vec(rng, 6);
    e.client_id = i % 3;
    e.round = 7;
    bank.push_entry(std::move(e));
  }
  auto bytes = bank.serialize();
  MemoryBank back = MemoryBank::deserialize(bytes, 8);
  REQUIRE(back.size() == bank.size());
  for (int i = 0; i < bank.size(); ++i) {
    CHECK(back.entries()[static_cast<std::size_t>(i)].client_id ==
          bank.entries()[static_cast<std::size_t>(i)].client_id);
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(std::abs(back.entries()[static_cast<std::size_t>(i)].vec[j] -
                     bank.entries()[static_cast<std::size_t>(i)].vec[j]) < 1e-6);
  }
  // serialized size is the exact documented layout
  CHECK(bytes.size() == 8 + 5 * (8 + 4 * 6));
}

TEST_CASE("bank merge is arrival-order independent") {
  Rng rng(3);
  auto mk = [&](int client) {
    MemoryBank b(16);
    for (int i = 0; i < 3; ++i) {
      BankEntry e;
      e.vec = unit_vec(rng, 4);
      e.client_id = client;
      e.round = 1;
      b.push_entry(std::move(e));
    }
    return b;
  };
  MemoryBank b0 = mk(0), b1 = mk(1), b2 = mk(2);
  MemoryBank m1 = bank_merge({b0, b1, b2}, 16);
  MemoryBank m2 = bank_merge({b2, b0, b1}, 16);
  REQUIRE(m1.size() == m2.size());
  for (int i = 0; i < m1.size(); ++i) {
    CHECK(m1.entries()[static_cast<std::size_t>(i)].client_id ==
          m2.entries()[static_cast<std::size_t>(i)].client_id);
    CHECK(m1.entries()[static_cast<std::size_t>(i)].vec ==
          m2.entries()[static_cast<std::size_t>(i)].vec);
  }
}

TEST_CASE("uniform-similarity contrastive loss hits the closed form") {
  // all features identical: every similarity is 1, so the loss reduces to
  // log of the denominator-set size
  const int dim = 4, n = 3, k = 5;
  Tensor e1 = Tensor::zeros({1, dim});
  e1.data[0] = 1.0;
  MemoryBank bank(16);
  for (int i = 0; i < k; ++i) {
    BankEntry e;
    e.vec = e1.data;
    e.client_id = 0;
    e.round = 0;
    bank.push_entry(std::move(e));
  }
  Tape t;
  std::vector<Tape::NodeId> batch, paired;
  for (int i = 0; i < n; ++i) {
    batch.push_back(t.constant(e1));
    paired.push_back(t.constant(e1));
  }
  const double tau = 0.07;
  // standard form keeps the positive in the denominator: 2n-1+k terms
  auto loss = hcl_loss(t, batch, paired, bank, tau, false);
  CHECK(t.val(loss).data[0] == doctest::Approx(std::log(2.0 * n - 1 + k)).epsilon(1e-9));
  // strict form drops it: 2n-2+k terms
  auto strict = hcl_loss(t, batch, paired, bank, tau, true);
  CHECK(t.val(strict).data[0] == doctest::Approx(std::log(2.0 * n - 2 + k)).epsilon(1e-9));
}

TEST_CASE("single-pair single-negative case matches the scalar oracle") {
  // N = 1 with one bank negative: loss = -log( e^{s+/t} / (e^{s+/t} + e^{sb/t}) )
  const int dim = 3;
  Rng rng(9);
  Tensor f = unit_row(rng, dim), g = unit_row(rng, dim);
  auto bvec = unit_vec(rng, dim);
  MemoryBank bank(4);
  BankEntry e;
  e.vec = bvec;
  bank.push_entry(std::move(e));
  const double tau = 0.2;
  double sp = 0.0, sb = 0.0;
  for (int i = 0; i < dim; ++i) {
    sp += f.data[static_cast<std::size_t>(i)] * g.data[static_cast<std::size_t>(i)];
    sb += f.data[static_cast<std::size_t>(i)] * bvec[static_cast<std::size_t>(i)];
  }
  const double oracle = -std::log(std::exp(sp / tau) / (std::exp(sp / tau) + std::exp(sb / tau)));
  Tape t;
  auto loss = hcl_loss(t, {t.constant(f)}, {t.constant(g)}, bank, tau, false);
  CHECK(t.val(loss).data[0] == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("contrastive gradients match finite differences") {
  const int dim = 5, n = 3;
  Rng rng(17);
  ParameterSet ps;
  for (int i = 0; i < n; ++i) {
    ps["f" + std::to_string(i)] = {Tensor::randn({1, dim}, rng), true, "t"};
    ps["g" + std::to_string(i)] = {Tensor::randn({1, dim}, rng), true, "t"};
  }
  MemoryBank bank(8);
  for (int i = 0; i < 4; ++i) {
    BankEntry e;
    e.vec = unit_vec(rng, dim);
    bank.push_entry(std::move(e));
  }
  auto build = [&](Tape& t) {
    std::vector<Tape::NodeId> batch, paired;
    for (int i = 0; i < n; ++i) {
      batch.push_back(t.l2_normalize_row(t.param(ps, "f" + std::to_string(i))));
      paired.push_back(t.l2_normalize_row(t.param(ps, "g" + std::to_string(i))));
    }
    return hcl_loss(t, batch, paired, bank, 0.1, false);
  };
  CHECK(testutil::max_grad_rel_error(ps, build) < 1e-4);
}

TEST_CASE("bank vectors receive no gradient") {
  // the bank enters as constants; the only trainable leaves are the views
  const int dim = 4;
  Rng rng(23);
  ParameterSet ps;
  ps["f"] = {Tensor::randn({1, dim}, rng), true, "t"};
  MemoryBank bank(4);
  BankEntry e;
  e.vec = unit_vec(rng, dim);
  bank.push_entry(std::move(e));
  Tape t;
  auto f = t.l2_normalize_row(t.param(ps, "f"));
  auto g = t.constant(unit_row(rng, dim));
  auto loss = hcl_loss(t, {f}, {g}, bank, 0.1, true);
  auto grads = t.backward(loss);
  CHECK(grads.size() == 1);
  CHECK(grads.count("f") == 1);
}

TEST_CASE("contrastive loss validates inputs") {
  Tape t;
  MemoryBank empty_bank(4);
  Rng rng(4);
  auto f = t.constant(unit_row(rng, 3));
  auto g = t.constant(unit_row(rng, 3));
  // N = 1 without bank and strict exclusion leaves no negatives
  CHECK_THROWS(hcl_loss(t, {f}, {g}, empty_bank, 0.1, true));
  CHECK_THROWS(hcl_loss(t, {f}, {g}, empty_bank, -1.0, false));
  auto bad = t.constant(Tensor({1, 3}, {2.0, 0.0, 0.0}));
  CHECK_THROWS(hcl_loss(t, {bad}, {g}, empty_bank, 0.1, false));
}

TEST_CASE("augmentation is deterministic, bounded and usually different") {
  Rng rng(31);
  Tensor img = Tensor::zeros({16, 16});
  for (auto& v : img.data) v = rng.uniform();
  Tensor a = augment(img, 5);
  Tensor b = augment(img, 5);
  CHECK(a.max_abs_diff(b) == 0.0);
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(augment(img, 6).max_abs_diff(a) > 0.0);
}
