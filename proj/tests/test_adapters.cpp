// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "fedrg/adapters.hpp"
#include "fedrg/autodiff.hpp"
#include "helpers.hpp"

using namespace fedrg;

namespace {
// reference: y = x (W + up.down)^T
Tensor merged_forward(const Tensor& x, const Tensor& w, const Tensor& down, const Tensor& up) {
  const int T = x.shape[0], d_in = x.shape[1], d_out = w.shape[0], r = down.shape[0];
  Tensor wm = w;
  for (int o = 0; o < d_out; ++o)
    for (int i = 0; i < d_in; ++i) {
      double delta = 0.0;
      for (int k = 0; k < r; ++k) delta += up.at(o, k) * down.at(k, i);
      wm.at(o, i) += delta;
    }
  Tensor y = Tensor::zeros({T, d_out});
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < d_out; ++o) {
      double s = 0.0;
      for (int i = 0; i < d_in; ++i) s += x.at(t, i) * wm.at(o, i);
      y.at(t, o) = s;
    }
  return y;
}
}  // namespace

TEST_CASE("apply_site equals the merged-weight product on 100 random sites") {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const int d_in = 3 + static_cast<int>(rng.below(6));
    const int d_out = 3 + static_cast<int>(rng.below(6));
    const int r = 1 + static_cast<int>(rng.below(4));
    const int T = 1 + static_cast<int>(rng.below(5));
    ParameterSet ps;
    ps[generic_param("l0.q", "down")] = {Tensor::randn({r, d_in}, rng), true, "adapter_g"};
    ps[generic_param("l0.q", "up")] = {Tensor::randn({d_out, r}, rng), true, "adapter_g"};
    Tensor x = Tensor::randn({T, d_in}, rng);
    Tensor w = Tensor::randn({d_out, d_in}, rng);
    Tape t;
    auto y = apply_site(t, ps, t.constant(w), t.constant(x), "l0.q", AdapterMode::generic_only());
    Tensor ref = merged_forward(x, w, ps.at(generic_param("l0.q", "down")).value,
                                ps.at(generic_param("l0.q", "up")).value);
    CHECK(t.val(y).max_abs_diff(ref) < 1e-9);
  }
}

TEST_CASE("zero up-factor means the adapter is an exact identity delta") {
  Rng rng(11);
  const int d = 8, r = 4;
  ParameterSet ps;
  init_generic_adapter(ps, 1, d, d, r, rng);  // up factors start at zero
  Tensor x = Tensor::randn({3, d}, rng);
  Tensor w = Tensor::randn({d, d}, rng);
  Tape t;
  auto with = apply_site(t, ps, t.constant(w), t.constant(x), "l0.q", AdapterMode::generic_only());
  auto without = apply_site(t, ps, t.constant(w), t.constant(x), "l0.q", AdapterMode::none());
  CHECK(t.val(with).max_abs_diff(t.val(without)) == 0.0);
}

TEST_CASE("adapter parameter layout and count") {
  Rng rng(2);
  ParameterSet ps;
  init_generic_adapter(ps, 2, 64, 64, 4, rng);
  init_specialized_adapter(ps, 2, 64, 64, 4, rng);
  CHECK(adapter_sites(2) == std::vector<std::string>{"l0.q", "l0.v", "l1.q", "l1.v"});
  int n_g = 0, n_inh = 0, n_loc = 0;
  for (const auto& [name, p] : ps) {
    if (name.rfind("adapter_g.", 0) == 0) {
      ++n_g;
      CHECK(p.trainable);
      CHECK(p.partition == "adapter_g");
    }
    if (name.rfind("adapter_s.inh.", 0) == 0) {
      ++n_inh;
      CHECK(!p.trainable);
      CHECK(p.partition == "adapter_s");
    }
    if (name.rfind("adapter_s.loc.", 0) == 0) {
      ++n_loc;
      CHECK(p.trainable);
    }
  }
  CHECK(n_g == 8);  // 4 sites x {down, up}
  CHECK(n_inh == 8);
  CHECK(n_loc == 8);
  CHECK(site_param_count(64, 64, 4) == 4 * (64 + 64));
}

TEST_CASE("inherit copies the generic adapter and keeps it frozen") {
  Rng rng(6);
  ParameterSet ps;
  init_generic_adapter(ps, 1, 4, 4, 2, rng);
  init_specialized_adapter(ps, 1, 4, 4, 2, rng);
  // perturb generic, then inherit
  ps.at(generic_param("l0.q", "up")).value.data[0] = 3.5;
  inherit_from_generic(ps, 1);
  CHECK(ps.at(inherited_param("l0.q", "up")).value.data[0] == 3.5);
  CHECK(!ps.at(inherited_param("l0.q", "up")).trainable);
  // local extension untouched by inheritance
  auto before = ps.at(local_param("l0.q", "down")).value;
  inherit_from_generic(ps, 1);
  CHECK(ps.at(local_param("l0.q", "down")).value.max_abs_diff(before) == 0.0);
}

TEST_CASE("specialized delta is inherited plus local; combined blends by alpha") {
  Rng rng(8);
  const int d = 6, r = 2;
  ParameterSet ps;
  init_generic_adapter(ps, 1, d, d, r, rng);
  init_specialized_adapter(ps, 1, d, d, r, rng);
  // give every factor a nonzero value
  for (auto& [name, p] : ps)
    if (name.find("up") != std::string::npos)
      p.value = Tensor::randn(p.value.shape, rng, 0.5);
  inherit_from_generic(ps, 1);
  for (auto& [name, p] : ps)
    if (name.rfind("adapter_s.loc.", 0) == 0) p.value = Tensor::randn(p.value.shape, rng, 0.5);

  Tensor x = Tensor::randn({2, d}, rng);
  Tape t;
  auto xc = t.constant(x);
  auto dg = lora_delta(t, xc, t.param(ps, generic_param("l0.q", "down")),
                       t.param(ps, generic_param("l0.q", "up")));
  auto dinh = lora_delta(t, xc, t.param(ps, inherited_param("l0.q", "down")),
                         t.param(ps, inherited_param("l0.q", "up")));
  auto dloc = lora_delta(t, xc, t.param(ps, local_param("l0.q", "down")),
                         t.param(ps, local_param("l0.q", "up")));
  auto ds = specialized_delta(t, ps, xc, "l0.q");
  CHECK(t.val(ds).max_abs_diff(t.val(t.add(dinh, dloc))) < 1e-12);
  const double alpha = 0.3;
  auto dc = combined_delta(t, ps, xc, "l0.q", alpha);
  auto ref = t.add(t.scale(dg, alpha), t.scale(ds, 1.0 - alpha));
  CHECK(t.val(dc).max_abs_diff(t.val(ref)) < 1e-12);
}

TEST_CASE("no-grad adapter delta equals the tape version row by row") {
  Rng rng(16);
  const int d = 10, r = 3;
  ParameterSet ps;
  init_generic_adapter(ps, 1, d, d, r, rng);
  init_specialized_adapter(ps, 1, d, d, r, rng);
  for (auto& [name, p] : ps) p.value = Tensor::randn(p.value.shape, rng, 0.4);
  Tensor x = Tensor::randn({1, d}, rng);
  for (auto mode : {AdapterMode::generic_only(), AdapterMode::specialized_only(),
                    AdapterMode::combined(0.5)}) {
    Tape t;
    Tape::NodeId node;
    auto xc = t.constant(x);
    if (mode.kind == AdapterMode::Kind::GenericOnly)
      node = lora_delta(t, xc, t.param(ps, generic_param("l0.v", "down")),
                        t.param(ps, generic_param("l0.v", "up")));
    else if (mode.kind == AdapterMode::Kind::SpecializedOnly)
      node = specialized_delta(t, ps, xc, "l0.v");
    else
      node = combined_delta(t, ps, xc, "l0.v", mode.alpha_inf);
    auto fast = adapter_delta_nograd(ps, x.data.data(), d, "l0.v", mode);
    REQUIRE(static_cast<int>(fast.size()) == d);
    for (int i = 0; i < d; ++i)
      CHECK(fast[static_cast<std::size_t>(i)] == doctest::Approx(t.val(node).data[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("gradients flow through lora factors correctly") {
  Rng rng(61);
  ParameterSet ps;
  ps["down"] = {Tensor::randn({2, 5}, rng), true, "adapter_g"};
  ps["up"] = {Tensor::randn({4, 2}, rng), true, "adapter_g"};
  Tensor x = Tensor::randn({3, 5}, rng);
  auto build = [&](Tape& t) {
    return t.sum(t.gelu(lora_delta(t, t.constant(x), t.param(ps, "down"), t.param(ps, "up"))));
  };
  CHECK(testutil::max_grad_rel_error(ps, build) < 1e-4);
}
