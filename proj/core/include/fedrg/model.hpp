// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedrg/adapters.hpp"
#include "fedrg/autodiff.hpp"
#include "fedrg/corpus.hpp"
#include "fedrg/rng.hpp"

namespace fedrg {

struct ModelConfig {
  int image_size = kImageSize;
  int patch = 8;          // P; S = (image_size / patch)^2
  int channels = 64;      // C, encoder feature width
  int mix_hidden = 48;    // encoder channel-MLP hidden
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_hidden = 128;
  int max_seq = 96;
  int max_report_len = 48;
  int lora_rank = 4;

  int patches() const {
    const int side = image_size / patch;
    return side * side;
  }
  int head_dim() const { return d_model / n_heads; }
};

struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  int bos = -1, eos = -1, pad = -1;
  std::array<int, 4> prompt{};  // indexed by DiseaseState

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& tok) const;
  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
};

// Corpus words + [BLA]/[POS]/[NEG]/[UNC] + <bos>/<eos>/<pad>.
Vocab build_vocab();

// --- parameter construction -------------------------------------------------

// encoder + classifier + projection partitions, all trainable.
void init_encoder_params(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);
// decoder base partition; trainable only during pretraining.
void init_decoder_base(ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab, Rng& rng,
                       bool trainable);
void set_partition_trainable(ParameterSet& ps, const std::string& partition, bool trainable);

// --- encoder ----------------------------------------------------------------

struct VisualNodes {
  Tape::NodeId patches;     // [S,C]
  Tape::NodeId pooled_raw;  // [1,C], mean over patches (classifier input)
  Tape::NodeId pooled;      // [1,C], unit norm (contrastive/bank input)
};

VisualNodes encode(Tape& t, const ParameterSet& ps, const Tensor& image, const ModelConfig& cfg);
// Patch embedding only (before the mixing layers); used by locality checks.
Tape::NodeId patch_embed(Tape& t, const ParameterSet& ps, const Tensor& image,
                         const ModelConfig& cfg);
// 4-way logits per disease, [14,4].
Tape::NodeId classify(Tape& t, const ParameterSet& ps, Tape::NodeId pooled);

// --- prompting --------------------------------------------------------------

std::vector<int> labels_to_prompt(const DiseaseLabelVector& labels, const Vocab& vocab);
DiseaseLabelVector prompt_to_labels(const std::vector<int>& prompt_ids, const Vocab& vocab);

// --- decoder ----------------------------------------------------------------

struct LmOutput {
  Tape::NodeId logits;  // [n_report+1, V]; predicts report tokens then EOS
  Tape::NodeId hidden;  // final-layer hidden states at the same positions
  std::vector<int> targets;
  std::vector<bool> mask;  // false at PAD targets
};

// Input layout: [S visual prefix][14 prompt tokens][BOS][report]; pass
// patches = -1 for a text-only sequence. text_prefix (rows already at
// d_model, bypassing the projection) then stands in for the visual prefix,
// keeping the prompt and report at their deployment positions; pretraining
// feeds random rows there so the frozen base both trains the right
// positional-embedding rows and learns to ignore arbitrary prefix content.
LmOutput forward_lm(Tape& t, const ParameterSet& ps, Tape::NodeId patches,
                    const std::vector<int>& prompt_ids, const std::vector<int>& report_ids,
                    const AdapterMode& mode, const ModelConfig& cfg, const Vocab& vocab,
                    Tape::NodeId text_prefix = -1);

// --- no-grad inference ------------------------------------------------------

struct VisualFeatures {
  Tensor patches;     // [S,C]
  Tensor pooled_raw;  // [1,C], pre-normalization mean
  Tensor pooled;      // [1,C], unit norm
};

VisualFeatures encode_nograd(const ParameterSet& ps, const Tensor& image, const ModelConfig& cfg);
Tensor classify_nograd(const ParameterSet& ps, const VisualFeatures& feats);  // [14,4]
DiseaseLabelVector argmax_labels(const Tensor& class_logits);

// Greedy decoding with a per-layer KV cache; stops at EOS or max_len.
std::vector<int> generate(const ParameterSet& ps, const VisualFeatures& feats,
                          const std::vector<int>& prompt_ids, const AdapterMode& mode,
                          const ModelConfig& cfg, const Vocab& vocab, int max_len);

// --- pretraining ------------------------------------------------------------

// Trains the decoder as a prompt-conditioned LM on the neutral-style corpus
// (no visual prefix), then freezes the base partition.
void pretrain_base(ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab,
                   const std::vector<Sample>& corpus, int steps, int batch, double lr0,
                   std::uint64_t seed);

// Mean LM loss over a corpus with the current base (no adapters).
double avg_lm_loss(const ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab,
                   const std::vector<Sample>& corpus);

}  // namespace fedrg
