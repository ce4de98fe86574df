// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedrg/autodiff.hpp"

namespace fedrg {

struct LossWeights {
  double lambda_hcl = 0.5;  // contrastive term weight
  double lambda_kd = 0.5;   // distillation term weight
};

// Outputs of one forward pass through each adapter path, paired up for
// mutual distillation.
struct DistillBundle {
  Tape::NodeId h_s;  // specialized-path final hidden states [T,d]
  Tape::NodeId h_g;  // generic-path final hidden states
  Tape::NodeId s_s;  // specialized-path report logits [T,V]
  Tape::NodeId s_g;  // generic-path report logits
};

// Mean token NLL over unmasked report positions.
Tape::NodeId lm_loss(Tape& t, Tape::NodeId logits, const std::vector<int>& targets,
                     const std::vector<bool>& mask);

// Mean 4-way cross-entropy over the 14 diseases; logits [14,4].
Tape::NodeId ce_loss(Tape& t, Tape::NodeId class_logits, const std::vector<int>& states);

// Mean over positions of (1 - cosine similarity).
Tape::NodeId cos_embed_loss(Tape& t, Tape::NodeId h_a, Tape::NodeId h_b);

// Mean over positions of KL(softmax(target) || softmax(source)).
Tape::NodeId kl_loss(Tape& t, Tape::NodeId target_logits, Tape::NodeId source_logits);

// Local-to-global distillation: the specialized path is the (detached)
// teacher and gradients flow to the generic path only. `kl_swapped`
// exchanges the KL argument order.
Tape::NodeId distill_l2g(Tape& t, const DistillBundle& b, bool kl_swapped = false);
// Global-to-local: mirrored roles.
Tape::NodeId distill_g2l(Tape& t, const DistillBundle& b, bool kl_swapped = false);

struct CompositeLosses {
  Tape::NodeId l1;  // drives encoder/classifier/projection + generic adapter
  Tape::NodeId l2;  // drives encoder/classifier/projection + local specialized adapter
};

// L1 = w_hcl*hcl + ce + w_kd*l2g + lm_generic
// L2 = w_hcl*hcl + ce + w_kd*g2l + lm_specialized
// Pass -1 for hcl/distill node ids to drop the term (ablations).
CompositeLosses composite_losses(Tape& t, Tape::NodeId hcl, Tape::NodeId ce, Tape::NodeId lm_g,
                                 Tape::NodeId lm_s, Tape::NodeId l2g, Tape::NodeId g2l,
                                 const LossWeights& w);

}  // namespace fedrg
