// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fedrg/evalmetrics.hpp"

using namespace fedrg;

namespace {
TokenSeq toks(std::initializer_list<const char*> words) {
  TokenSeq out;
  for (const char* w : words) out.emplace_back(w);
  return out;
}
}  // namespace

TEST_CASE("bleu is 1 for identical corpora at every order") {
  std::vector<TokenSeq> c = {toks({"a", "b", "c", "d", "e"}), toks({"x", "y", "z"})};
  for (int n = 1; n <= 4; ++n) CHECK(bleu(c, c, n) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu hand case with brevity penalty") {
  // candidate "a b c d" vs reference "a b c d e": P1 = 1, BP = e^{1-5/4}
  std::vector<TokenSeq> cand = {toks({"a", "b", "c", "d"})};
  std::vector<TokenSeq> ref = {toks({"a", "b", "c", "d", "e"})};
  CHECK(bleu(cand, ref, 1) == doctest::Approx(std::exp(-0.25)).epsilon(1e-4));
  CHECK(bleu(cand, ref, 1) == doctest::Approx(0.7788).epsilon(1e-3));
}

TEST_CASE("bleu clips repeated n-grams and is zero on disjoint corpora") {
  // candidate repeats "the" 4x, reference has it twice -> P1 = 2/4
  std::vector<TokenSeq> cand = {toks({"the", "the", "the", "the"})};
  std::vector<TokenSeq> ref = {toks({"the", "cat", "the", "mat"})};
  CHECK(bleu(cand, ref, 1) == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<TokenSeq> disj = {toks({"q", "w"})};
  CHECK(bleu(disj, ref, 1) == 0.0);
}

TEST_CASE("bleu without smoothing collapses when an order has no matches") {
  std::vector<TokenSeq> cand = {toks({"a", "x", "b"})};  // unigrams match, bigrams do not
  std::vector<TokenSeq> ref = {toks({"a", "b", "c"})};
  CHECK(bleu(cand, ref, 1) > 0.0);
  CHECK(bleu(cand, ref, 2) == 0.0);
}

TEST_CASE("bleu is non-increasing in max order when precisions are below one") {
  std::vector<TokenSeq> cand = {toks({"a", "b", "x", "d", "e"})};
  std::vector<TokenSeq> ref = {toks({"a", "b", "c", "d", "e"})};
  double prev = 1.0;
  for (int n = 1; n <= 4; ++n) {
    const double b = bleu(cand, ref, n);
    CHECK(b <= prev + 1e-12);
    prev = b;
  }
}

TEST_CASE("bleu and rouge reject empty corpora") {
  std::vector<TokenSeq> empty;
  CHECK_THROWS(bleu(empty, empty, 4));
  CHECK_THROWS(rouge_l(empty, empty));
}

TEST_CASE("rouge-l hand case") {
  // cand "a c e" vs ref "a b c d e": LCS 3, P = 1, R = 0.6 -> F = 0.75
  std::vector<TokenSeq> cand = {toks({"a", "c", "e"})};
  std::vector<TokenSeq> ref = {toks({"a", "b", "c", "d", "e"})};
  CHECK(lcs_length(cand[0], ref[0]) == 3);
  CHECK(rouge_l(cand, ref) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("rouge-l identity and disjoint cases") {
  std::vector<TokenSeq> c = {toks({"a", "b", "c"})};
  CHECK(rouge_l(c, c) == doctest::Approx(1.0));
  std::vector<TokenSeq> d = {toks({"x", "y"})};
  CHECK(rouge_l(d, c) == 0.0);
}

TEST_CASE("ce metrics set oracle") {
  // pred {1,2}, gt {2,3} -> P = R = F1 = 0.5
  DiseaseLabelVector pred{}, gt{};
  pred[1] = DiseaseState::POS;
  pred[2] = DiseaseState::POS;
  gt[2] = DiseaseState::POS;
  gt[3] = DiseaseState::POS;
  auto s = ce_metrics({pred}, {gt});
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));
}

TEST_CASE("ce metrics empty-set conventions") {
  DiseaseLabelVector none{}, some{};
  some[4] = DiseaseState::POS;
  // both empty -> all ones
  auto both = ce_metrics({none}, {none});
  CHECK(both.precision == 1.0);
  CHECK(both.recall == 1.0);
  CHECK(both.f1 == 1.0);
  // prediction empty only -> P = 1, R = 0
  auto pe = ce_metrics({none}, {some});
  CHECK(pe.precision == 1.0);
  CHECK(pe.recall == 0.0);
  CHECK(pe.f1 == 0.0);
  // reference empty only -> P = 0, R = 1
  auto re = ce_metrics({some}, {none});
  CHECK(re.precision == 0.0);
  CHECK(re.recall == 1.0);
  CHECK(re.f1 == 0.0);
}

TEST_CASE("ce metrics do not count UNC or NEG as positive") {
  DiseaseLabelVector pred{}, gt{};
  pred[0] = DiseaseState::UNC;
  pred[1] = DiseaseState::NEG;
  gt[0] = DiseaseState::POS;
  auto s = ce_metrics({pred}, {gt});
  CHECK(s.precision == 1.0);  // empty prediction set
  CHECK(s.recall == 0.0);
}

TEST_CASE("ce metrics average per example") {
  DiseaseLabelVector a{}, b{};
  a[0] = DiseaseState::POS;
  b[1] = DiseaseState::POS;
  // example 1 perfect, example 2 total miss
  auto s = ce_metrics({a, a}, {a, b});
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));
}

TEST_CASE("eval report serializes to json and csv") {
  EvalReport r;
  r.split = "in_domain";
  r.n_samples = 10;
  r.bleu4 = 0.25;
  r.ce.f1 = 0.5;
  CHECK(r.to_json().find("\"bleu4\": 0.25") != std::string::npos);
  CHECK(r.to_csv_row().rfind("in_domain,10,", 0) == 0);
  CHECK(EvalReport::csv_header().rfind("split,", 0) == 0);
}

TEST_CASE("metrics stay within the unit interval on random corpora") {
  Rng rng(77);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenSeq> cand, ref;
    for (int i = 0; i < 4; ++i) {
      TokenSeq c, r;
      const int lc = 1 + static_cast<int>(rng.below(8));
      const int lr = 1 + static_cast<int>(rng.below(8));
      for (int k = 0; k < lc; ++k) c.push_back(words[rng.below(words.size())]);
      for (int k = 0; k < lr; ++k) r.push_back(words[rng.below(words.size())]);
      cand.push_back(c);
      ref.push_back(r);
    }
    for (int n = 1; n <= 4; ++n) {
      const double b = bleu(cand, ref, n);
      CHECK(b >= 0.0);
      CHECK(b <= 1.0 + 1e-12);
    }
    const double r = rouge_l(cand, ref);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0 + 1e-12);
  }
}
