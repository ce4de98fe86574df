// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/losses.hpp"

#include <stdexcept>

namespace fedrg {

Tape::NodeId lm_loss(Tape& t, Tape::NodeId logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask) {
  if (static_cast<int>(targets.size()) != t.val(logits).shape[0])
    throw std::invalid_argument("lm_loss: target length does not match logit rows");
  return t.pick_nll(t.log_softmax_rows(logits), targets, mask);
}

Tape::NodeId ce_loss(Tape& t, Tape::NodeId class_logits, const std::vector<int>& states) {
  const Tensor& v = t.val(class_logits);
  if (v.shape.size() != 2 || v.shape[1] != 4)
    throw std::invalid_argument("ce_loss: expected [n,4] logits");
  if (static_cast<int>(states.size()) != v.shape[0])
    throw std::invalid_argument("ce_loss: label count mismatch");
  return t.pick_nll(t.log_softmax_rows(class_logits), states,
                    std::vector<bool>(states.size(), true));
}

Tape::NodeId cos_embed_loss(Tape& t, Tape::NodeId h_a, Tape::NodeId h_b) {
  return t.cos_embed_loss(h_a, h_b);
}

Tape::NodeId kl_loss(Tape& t, Tape::NodeId target_logits, Tape::NodeId source_logits) {
  if (!t.val(target_logits).same_shape(t.val(source_logits)))
    throw std::invalid_argument("kl_loss: shape mismatch");
  const int rows = t.val(target_logits).shape[0];
  auto lp_t = t.log_softmax_rows(target_logits);
  auto lp_s = t.log_softmax_rows(source_logits);
  auto p_t = t.exp(lp_t);
  auto per_entry = t.mul(p_t, t.sub(lp_t, lp_s));
  return t.scale(t.sum(per_entry), 1.0 / rows);
}

Tape::NodeId distill_l2g(Tape& t, const DistillBundle& b, bool kl_swapped) {
  auto teacher_h = t.stop_grad(b.h_s);
  auto teacher_s = t.stop_grad(b.s_s);
  auto cos = cos_embed_loss(t, teacher_h, b.h_g);
  auto kl = kl_swapped ? kl_loss(t, teacher_s, b.s_g) : kl_loss(t, b.s_g, teacher_s);
  return t.add(cos, kl);
}

Tape::NodeId distill_g2l(Tape& t, const DistillBundle& b, bool kl_swapped) {
  auto teacher_h = t.stop_grad(b.h_g);
  auto teacher_s = t.stop_grad(b.s_g);
  auto cos = cos_embed_loss(t, teacher_h, b.h_s);
  auto kl = kl_swapped ? kl_loss(t, teacher_s, b.s_s) : kl_loss(t, b.s_s, teacher_s);
  return t.add(cos, kl);
}

CompositeLosses composite_losses(Tape& t, Tape::NodeId hcl, Tape::NodeId ce, Tape::NodeId lm_g,
                                 Tape::NodeId lm_s, Tape::NodeId l2g, Tape::NodeId g2l,
                                 const LossWeights& w) {
  if (w.lambda_hcl < 0.0 || w.lambda_kd < 0.0)
    throw std::invalid_argument("composite_losses: negative loss weight");
  auto build = [&](Tape::NodeId lm, Tape::NodeId kd) {
    Tape::NodeId acc = t.add(ce, lm);
    if (hcl >= 0 && w.lambda_hcl > 0.0) acc = t.add(acc, t.scale(hcl, w.lambda_hcl));
    if (kd >= 0 && w.lambda_kd > 0.0) acc = t.add(acc, t.scale(kd, w.lambda_kd));
    return acc;
  };
  return {build(lm_g, l2g), build(lm_s, g2l)};
}

}  // namespace fedrg
