// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedrg {

namespace {
std::map<std::vector<std::string>, int> ngram_counts(const TokenSeq& seq, int order) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(seq.size()) < order) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= seq.size(); ++i)
    ++counts[std::vector<std::string>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                      seq.begin() + static_cast<std::ptrdiff_t>(i) + order)];
  return counts;
}
}  // namespace

double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
            int max_order) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("bleu: candidate/reference count mismatch");
  if (candidates.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_order < 1) return 0.0;

  long cand_len = 0, ref_len = 0;
  std::vector<long> matched(static_cast<std::size_t>(max_order), 0);
  std::vector<long> total(static_cast<std::size_t>(max_order), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<long>(candidates[i].size());
    ref_len += static_cast<long>(references[i].size());
    for (int n = 1; n <= max_order; ++n) {
      auto cc = ngram_counts(candidates[i], n);
      auto rc = ngram_counts(references[i], n);
      for (const auto& [gram, cnt] : cc) {
        total[static_cast<std::size_t>(n - 1)] += cnt;
        auto it = rc.find(gram);
        if (it != rc.end())
          matched[static_cast<std::size_t>(n - 1)] += std::min(cnt, it->second);
      }
    }
  }

  double log_prec = 0.0;
  for (int n = 0; n < max_order; ++n) {
    if (matched[static_cast<std::size_t>(n)] == 0 || total[static_cast<std::size_t>(n)] == 0)
      return 0.0;  // unsmoothed
    log_prec += std::log(static_cast<double>(matched[static_cast<std::size_t>(n)]) /
                         static_cast<double>(total[static_cast<std::size_t>(n)]));
  }
  log_prec /= max_order;
  const double bp =
      cand_len >= ref_len || cand_len == 0
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_prec);
}

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[m];
}

double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("rouge_l: candidate/reference count mismatch");
  if (candidates.empty()) throw std::invalid_argument("rouge_l: empty corpus");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    if (c.empty() && r.empty()) {
      total += 1.0;
      continue;
    }
    if (c.empty() || r.empty()) continue;
    const int l = lcs_length(c, r);
    if (l == 0) continue;
    const double p = static_cast<double>(l) / static_cast<double>(c.size());
    const double rec = static_cast<double>(l) / static_cast<double>(r.size());
    total += 2.0 * p * rec / (p + rec);
  }
  return total / static_cast<double>(candidates.size());
}

CeScores ce_metrics(const std::vector<DiseaseLabelVector>& predicted,
                    const std::vector<DiseaseLabelVector>& reference) {
  if (predicted.size() != reference.size())
    throw std::invalid_argument("ce_metrics: prediction/reference count mismatch");
  if (predicted.empty()) return {};
  CeScores out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    int tp = 0, np = 0, nr = 0;
    for (int d = 0; d < kNumDiseases; ++d) {
      const bool p = predicted[i][static_cast<std::size_t>(d)] == DiseaseState::POS;
      const bool r = reference[i][static_cast<std::size_t>(d)] == DiseaseState::POS;
      np += p;
      nr += r;
      tp += p && r;
    }
    const double prec = np == 0 ? 1.0 : static_cast<double>(tp) / np;
    const double rec = nr == 0 ? 1.0 : static_cast<double>(tp) / nr;
    out.precision += prec;
    out.recall += rec;
    out.f1 += prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
  }
  const double n = static_cast<double>(predicted.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["split"] = split;
  j["n_samples"] = n_samples;
  j["bleu1"] = bleu1;
  j["bleu2"] = bleu2;
  j["bleu3"] = bleu3;
  j["bleu4"] = bleu4;
  j["rouge_l"] = rouge;
  j["ce_precision"] = ce.precision;
  j["ce_recall"] = ce.recall;
  j["ce_f1"] = ce.f1;
  return j.dump(2);
}

std::string EvalReport::csv_header() {
  return "split,n_samples,bleu1,bleu2,bleu3,bleu4,rouge_l,ce_precision,ce_recall,ce_f1";
}

std::string EvalReport::to_csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << split << ',' << n_samples << ',' << bleu1 << ',' << bleu2 << ',' << bleu3 << ',' << bleu4
     << ',' << rouge << ',' << ce.precision << ',' << ce.recall << ',' << ce.f1;
  return os.str();
}

EvalReport evaluate_outputs(const std::string& split, const std::vector<TokenSeq>& candidates,
                            const std::vector<TokenSeq>& references,
                            const std::vector<DiseaseLabelVector>& predicted,
                            const std::vector<DiseaseLabelVector>& reference_labels) {
  EvalReport r;
  r.split = split;
  r.n_samples = static_cast<int>(candidates.size());
  r.bleu1 = bleu(candidates, references, 1);
  r.bleu2 = bleu(candidates, references, 2);
  r.bleu3 = bleu(candidates, references, 3);
  r.bleu4 = bleu(candidates, references, 4);
  r.rouge = rouge_l(candidates, references);
  r.ce = ce_metrics(predicted, reference_labels);
  return r;
}

}  // namespace fedrg
