// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fedrg/corpus.hpp"

namespace fedrg {

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU-n: geometric mean of modified n-gram precisions
// (unsmoothed; zero if any order has zero matches) times the brevity
// penalty. One reference per candidate.
double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
            int max_order = 4);

// Sentence-level ROUGE-L F (beta = 1), averaged over the corpus. Empty
// candidate and reference both count as 1; one empty side counts as 0.
double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

int lcs_length(const TokenSeq& a, const TokenSeq& b);

// Example-based clinical-efficacy scores: labels binarize to the positive
// state, precision/recall/F1 are computed per sample then averaged.
// Conventions when a sample has no positives: both sets empty -> P=R=F1=1;
// empty prediction set -> P=1; empty reference set -> R=1.
struct CeScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

CeScores ce_metrics(const std::vector<DiseaseLabelVector>& predicted,
                    const std::vector<DiseaseLabelVector>& reference);

struct EvalReport {
  std::string split;  // "in_domain" | "unseen"
  int n_samples = 0;
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double rouge = 0.0;
  CeScores ce;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

EvalReport evaluate_outputs(const std::string& split, const std::vector<TokenSeq>& candidates,
                            const std::vector<TokenSeq>& references,
                            const std::vector<DiseaseLabelVector>& predicted,
                            const std::vector<DiseaseLabelVector>& reference_labels);

}  // namespace fedrg
