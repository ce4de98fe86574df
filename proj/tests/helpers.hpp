// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "fedrg/autodiff.hpp"

namespace testutil {

// Central finite-difference check of d(loss)/d(param) for every trainable
// parameter, against an analytic gradient computed once. `build` must
// construct the loss from scratch on the given tape (parameters are read
// fresh each call).
inline double max_grad_rel_error(fedrg::ParameterSet& ps,
                                 const std::function<fedrg::Tape::NodeId(fedrg::Tape&)>& build,
                                 double h = 1e-5) {
  fedrg::Tape t0;
  auto loss0 = build(t0);
  fedrg::GradMap analytic = t0.backward(loss0);

  double worst = 0.0;
  for (auto& [name, grad] : analytic) {
    auto& value = ps.at(name).value;
    for (std::size_t i = 0; i < value.data.size(); ++i) {
      const double keep = value.data[i];
      value.data[i] = keep + h;
      fedrg::Tape tp;
      const double up = tp.val(build(tp)).data[0];
      value.data[i] = keep - h;
      fedrg::Tape tm;
      const double dn = tm.val(build(tm)).data[0];
      value.data[i] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double a = grad.data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
