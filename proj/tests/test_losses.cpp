// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fedrg/losses.hpp"
#include "helpers.hpp"

using namespace fedrg;

TEST_CASE("token-level language loss equals hand-computed nll") {
  Tape t;
  // two positions, three symbols, uniform logits -> loss = log 3
  auto logits = t.constant(Tensor::zeros({2, 3}));
  auto loss = lm_loss(t, logits, {0, 2}, {true, true});
  CHECK(t.val(loss).data[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  // masked position drops out of the average
  Tensor skewed = Tensor::zeros({2, 3});
  skewed.at(0, 0) = 10.0;  // position 0 nearly certain
  Tape t2;
  auto l2 = lm_loss(t2, t2.constant(skewed), {0, 2}, {true, false});
  CHECK(t2.val(l2).data[0] < 1e-4);
}

TEST_CASE("classification loss matches the softmax oracle") {
  Tensor logits = Tensor::zeros({2, 4});
  logits.at(0, 1) = 2.0;
  Tape t;
  auto loss = ce_loss(t, t.constant(logits), {1, 3});
  const double row0 = -2.0 + std::log(std::exp(2.0) + 3.0);
  const double row1 = std::log(4.0);
  CHECK(t.val(loss).data[0] == doctest::Approx(0.5 * (row0 + row1)).epsilon(1e-12));
  CHECK_THROWS(ce_loss(t, t.constant(Tensor::zeros({2, 3})), {0, 1}));
}

TEST_CASE("kl loss is zero for identical logits and positive otherwise") {
  Rng rng(5);
  Tensor a = Tensor::randn({3, 6}, rng);
  Tape t;
  auto zero = kl_loss(t, t.constant(a), t.constant(a));
  CHECK(t.val(zero).data[0] == doctest::Approx(0.0).epsilon(1e-12));
  Tensor b = Tensor::randn({3, 6}, rng);
  auto pos = kl_loss(t, t.constant(a), t.constant(b));
  CHECK(t.val(pos).data[0] > 0.0);
}

TEST_CASE("kl loss hand oracle on a 2-symbol row") {
  // target logits (0, log3): p = (1/4, 3/4); source uniform: q = (1/2, 1/2)
  Tensor tgt({1, 2}, {0.0, std::log(3.0)});
  Tensor src = Tensor::zeros({1, 2});
  Tape t;
  auto kl = kl_loss(t, t.constant(tgt), t.constant(src));
  const double expect = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  CHECK(t.val(kl).data[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("identical dual paths make both distillation losses vanish") {
  Rng rng(8);
  Tensor h = Tensor::randn({4, 6}, rng);
  Tensor s = Tensor::randn({4, 10}, rng);
  Tape t;
  DistillBundle b{t.constant(h), t.constant(h), t.constant(s), t.constant(s)};
  CHECK(t.val(distill_l2g(t, b, false)).data[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(t.val(distill_g2l(t, b, false)).data[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("distillation teaches the student only") {
  Rng rng(12);
  ParameterSet ps;
  ps["h_s"] = {Tensor::randn({2, 4}, rng), true, "t"};
  ps["h_g"] = {Tensor::randn({2, 4}, rng), true, "t"};
  ps["s_s"] = {Tensor::randn({2, 5}, rng), true, "t"};
  ps["s_g"] = {Tensor::randn({2, 5}, rng), true, "t"};
  {
    Tape t;
    DistillBundle b{t.param(ps, "h_s"), t.param(ps, "h_g"), t.param(ps, "s_s"),
                    t.param(ps, "s_g")};
    auto grads = t.backward(distill_l2g(t, b, false));
    // local-to-global: the generic path learns, the specialized teacher is detached
    CHECK(grads.count("h_g") == 1);
    CHECK(grads.count("s_g") == 1);
    CHECK(grads.count("h_s") == 0);
    CHECK(grads.count("s_s") == 0);
  }
  {
    Tape t;
    DistillBundle b{t.param(ps, "h_s"), t.param(ps, "h_g"), t.param(ps, "s_s"),
                    t.param(ps, "s_g")};
    auto grads = t.backward(distill_g2l(t, b, false));
    CHECK(grads.count("h_s") == 1);
    CHECK(grads.count("s_s") == 1);
    CHECK(grads.count("h_g") == 0);
    CHECK(grads.count("s_g") == 0);
  }
}

TEST_CASE("distillation gradients match finite differences on the student path") {
  // the teacher side enters as constants: with trainable teachers the
  // stop-grad makes the analytic gradient differ from the full derivative
  // by design
  Rng rng(21);
  ParameterSet ps;
  ps["h_g"] = {Tensor::randn({3, 4}, rng), true, "t"};
  ps["s_g"] = {Tensor::randn({3, 6}, rng), true, "t"};
  const Tensor h_s = Tensor::randn({3, 4}, rng);
  const Tensor s_s = Tensor::randn({3, 6}, rng);
  auto build = [&](Tape& t) {
    DistillBundle b{t.constant(h_s), t.param(ps, "h_g"), t.constant(s_s), t.param(ps, "s_g")};
    return distill_l2g(t, b, false);
  };
  CHECK(testutil::max_grad_rel_error(ps, build) < 1e-4);
  auto build_swapped = [&](Tape& t) {
    DistillBundle b{t.constant(h_s), t.param(ps, "h_g"), t.constant(s_s), t.param(ps, "s_g")};
    return distill_l2g(t, b, true);
  };
  CHECK(testutil::max_grad_rel_error(ps, build_swapped) < 1e-4);
}

TEST_CASE("composite losses assemble the configured terms") {
  Tape t;
  auto one = t.constant(Tensor::scalar(1.0));
  auto two = t.constant(Tensor::scalar(2.0));
  auto three = t.constant(Tensor::scalar(3.0));
  auto four = t.constant(Tensor::scalar(4.0));
  LossWeights w;
  w.lambda_hcl = 0.5;
  w.lambda_kd = 0.25;
  // l1 = 0.5*hcl + ce + 0.25*l2g + lm_g; l2 analog with lm_s/g2l
  auto c = composite_losses(t, one, two, three, four, one, two, w);
  CHECK(t.val(c.l1).data[0] == doctest::Approx(0.5 * 1 + 2 + 0.25 * 1 + 3));
  CHECK(t.val(c.l2).data[0] == doctest::Approx(0.5 * 1 + 2 + 0.25 * 2 + 4));
  // dropped terms (-1) disappear
  auto d = composite_losses(t, -1, two, three, four, -1, -1, w);
  CHECK(t.val(d.l1).data[0] == doctest::Approx(2 + 3));
  CHECK(t.val(d.l2).data[0] == doctest::Approx(2 + 4));
  LossWeights bad;
  bad.lambda_hcl = -1.0;
  CHECK_THROWS(composite_losses(t, one, two, three, four, one, two, bad));
}

TEST_CASE("language and classification losses pass finite differences") {
  Rng rng(31);
  ParameterSet ps;
  ps["logits"] = {Tensor::randn({4, 7}, rng), true, "t"};
  ps["cls"] = {Tensor::randn({3, 4}, rng), true, "t"};
  auto build = [&](Tape& t) {
    auto lm = lm_loss(t, t.param(ps, "logits"), {1, 0, 6, 3}, {true, true, false, true});
    auto ce = ce_loss(t, t.param(ps, "cls"), {0, 3, 2});
    return t.add(lm, ce);
  };
  CHECK(testutil::max_grad_rel_error(ps, build) < 1e-4);
}
