// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fedrg {

void AdamW::step(ParameterSet& params, const GradMap& grads, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("AdamW::step: lr must be positive");
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("AdamW::step: unknown parameter " + name);
    Param& p = it->second;
    if (!p.trainable) throw std::logic_error("AdamW::step: gradient for frozen parameter " + name);
    if (!p.value.same_shape(g))
      throw std::invalid_argument("AdamW::step: gradient shape mismatch for " + name);
    Moments& mo = moments_[name];
    if (mo.m.data.empty()) {
      mo.m = Tensor::zeros(p.value.shape);
      mo.v = Tensor::zeros(p.value.shape);
    }
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double gi = g.data[i];
      mo.m.data[i] = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * gi;
      mo.v.data[i] = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = mo.m.data[i] / bc1;
      const double vhat = mo.v.data[i] / bc2;
      double w = p.value.data[i];
      w -= lr * cfg_.weight_decay * w;  // decoupled decay
      w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p.value.data[i] = w;
    }
  }
}

double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0) throw std::invalid_argument("cosine_lr: negative step");
  if (step > total_steps) step = total_steps;
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * x));
}

}  // namespace fedrg
