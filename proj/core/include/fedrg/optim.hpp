// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "fedrg/autodiff.hpp"

namespace fedrg {

struct AdamWConfig {
  double lr = 5e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay Adam. Moments are keyed by parameter name and
// created on first touch.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every parameter present in grads. `lr` overrides
  // the configured base rate (schedules feed the current value here).
  void step(ParameterSet& params, const GradMap& grads, double lr);
  void step(ParameterSet& params, const GradMap& grads) { step(params, grads, cfg_.lr); }

  long step_count() const { return step_count_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  std::map<std::string, Moments> moments_;
  long step_count_ = 0;
};

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)); steps past the end clamp
// to the final value.
double cosine_lr(long step, long total_steps, double lr0);

}  // namespace fedrg
