// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/membank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fedrg {

void MemoryBank::push_entry(BankEntry e) {
  double norm = 0.0;
  for (double v : e.vec) norm += v * v;
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
    throw std::invalid_argument("MemoryBank: entry is not unit-norm");
  e.seq = next_seq_++;
  entries_.push_back(std::move(e));
  evict();
}

void MemoryBank::evict() {
  while (static_cast<int>(entries_.size()) > capacity_) {
    // FIFO by (round, seq)
    auto oldest = std::min_element(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
      return a.round != b.round ? a.round < b.round : a.seq < b.seq;
    });
    entries_.erase(oldest);
  }
}

Tensor MemoryBank::as_matrix(int dim) const {
  if (entries_.empty()) return Tensor::zeros({1, dim});  // callers check size() first
  Tensor m = Tensor::zeros({static_cast<int>(entries_.size()), dim});
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (static_cast<int>(entries_[i].vec.size()) != dim)
      throw std::invalid_argument("MemoryBank::as_matrix: dimension mismatch");
    for (int j = 0; j < dim; ++j) m.at(static_cast<int>(i), j) = entries_[i].vec[static_cast<std::size_t>(j)];
  }
  return m;
}

std::vector<std::uint8_t> MemoryBank::serialize() const {
  std::vector<std::uint8_t> out;
  if (entries_.empty()) return out;  // an empty bank costs zero bytes on the wire
  auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  push_u32(static_cast<std::uint32_t>(entries_.size()));
  push_u32(entries_.empty() ? 0 : static_cast<std::uint32_t>(entries_[0].vec.size()));
  for (const auto& e : entries_) {
    push_u32(static_cast<std::uint32_t>(e.client_id));
    push_u32(static_cast<std::uint32_t>(e.round));
    for (double v : e.vec) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      push_u32(bits);
    }
  }
  return out;
}

MemoryBank MemoryBank::deserialize(const std::vector<std::uint8_t>& bytes, int capacity) {
  if (bytes.empty()) return MemoryBank(capacity);
  std::size_t at = 0;
  auto read_u32 = [&]() {
    if (at + 4 > bytes.size()) throw std::out_of_range("MemoryBank::deserialize: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at++]) << (8 * i);
    return v;
  };
  const std::uint32_t count = read_u32();
  const std::uint32_t dim = read_u32();
  MemoryBank bank(capacity);
  for (std::uint32_t k = 0; k < count; ++k) {
    BankEntry e;
    e.client_id = static_cast<int>(read_u32());
    e.round = static_cast<long>(read_u32());
    e.vec.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      std::uint32_t bits = read_u32();
      float f;
      std::memcpy(&f, &bits, 4);
      e.vec[j] = static_cast<double>(f);
    }
    // f32 round-trip can nudge the norm; re-normalize
    double n = 0.0;
    for (double v : e.vec) n += v * v;
    n = std::sqrt(n);
    if (n > 0) for (auto& v : e.vec) v /= n;
    bank.push_entry(std::move(e));
  }
  return bank;
}

void bank_push(MemoryBank& bank, const std::vector<std::vector<double>>& pooled, int client_id,
               long round, int sample_count, Rng& rng) {
  std::vector<int> idx(pooled.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);
  const int take = std::min<int>(sample_count, static_cast<int>(pooled.size()));
  for (int k = 0; k < take; ++k) {
    BankEntry e;
    e.vec = pooled[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    e.client_id = client_id;
    e.round = round;
    bank.push_entry(std::move(e));
  }
}

MemoryBank bank_merge(const std::vector<MemoryBank>& banks, int capacity) {
  std::vector<const MemoryBank*> sorted;
  for (const auto& b : banks) sorted.push_back(&b);
  std::stable_sort(sorted.begin(), sorted.end(), [](const MemoryBank* a, const MemoryBank* b) {
    const int ca = a->size() ? a->entries()[0].client_id : 0;
    const int cb = b->size() ? b->entries()[0].client_id : 0;
    return ca < cb;
  });
  MemoryBank out(capacity);
  for (const MemoryBank* b : sorted)
    for (const auto& e : b->entries()) out.push_entry(e);
  return out;
}

Tape::NodeId hcl_loss(Tape& t, const std::vector<Tape::NodeId>& batch,
                      const std::vector<Tape::NodeId>& paired, const MemoryBank& bank, double tau,
                      bool strict_exclude_positive) {
  if (tau <= 0.0) throw std::invalid_argument("hcl_loss: tau must be positive");
  const int n = static_cast<int>(batch.size());
  if (n < 1 || paired.size() != batch.size())
    throw std::invalid_argument("hcl_loss: need N >= 1 matched view pairs");
  const int dim = t.val(batch[0]).cols();
  for (const auto& group : {batch, paired})
    for (auto id : group) {
      const Tensor& v = t.val(id);
      double norm = 0.0;
      for (double x : v.data) norm += x * x;
      if (std::abs(std::sqrt(norm) - 1.0) > 1e-4)
        throw std::invalid_argument("hcl_loss: feature vector is not unit-norm");
    }
  const int k = bank.size();
  // A(i) = (batch \ i) + (paired \ positive) + bank
  if (n - 1 + (n - 1) + k == 0) throw std::invalid_argument("hcl_loss: empty negative set");

  auto f = t.concat_rows(batch);
  auto g = t.concat_rows(paired);
  auto s_bb = t.matmul(f, t.transpose(f));  // [n,n]
  auto s_bp = t.matmul(f, t.transpose(g));  // [n,n]; diagonal = positives
  std::vector<Tape::NodeId> blocks = {s_bb, s_bp};
  if (k > 0) blocks.push_back(t.matmul(f, t.transpose(t.constant(bank.as_matrix(dim)))));
  auto sims = t.scale(t.concat_cols(blocks), 1.0 / tau);

  // mask self-similarity (and, in strict mode, the positive) out of the
  // denominator
  const int total = 2 * n + k;
  Tensor mask = Tensor::zeros({n, total});
  for (int i = 0; i < n; ++i) {
    mask.at(i, i) = -1e30;
    if (strict_exclude_positive) mask.at(i, n + i) = -1e30;
  }
  auto masked = t.add(sims, t.constant(std::move(mask)));
  auto lse = t.logsumexp_rows(masked);  // [n,1]

  Tensor diag_sel = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) diag_sel.at(i, i) = 1.0;
  auto pos = t.scale(t.rowwise_sum(t.mul(s_bp, t.constant(std::move(diag_sel)))), 1.0 / tau);

  return t.scale(t.sum(t.sub(lse, pos)), 1.0 / n);
}

Tensor augment(const Tensor& image, std::uint64_t seed) {
  Rng rng(seed ^ 0xa0661e57ULL);
  const int h = image.shape[0], w = image.shape[1];
  Tensor img = image;
  if (rng.uniform() < 0.5) {  // horizontal flip
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w / 2; ++j) std::swap(img.at(i, j), img.at(i, w - 1 - j));
  }
  // crop >= 75% area, then bilinear resize back
  const double scale = rng.uniform(0.87, 1.0);  // sqrt(0.75) ~ 0.866
  const int ch = std::max(1, static_cast<int>(std::lround(scale * h)));
  const int cw = std::max(1, static_cast<int>(std::lround(scale * w)));
  const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ch + 1)));
  const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw + 1)));
  Tensor out = Tensor::zeros({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double y = r0 + (ch - 1) * (h > 1 ? static_cast<double>(i) / (h - 1) : 0.0);
      const double x = c0 + (cw - 1) * (w > 1 ? static_cast<double>(j) / (w - 1) : 0.0);
      const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = y - y0, fx = x - x0;
      out.at(i, j) = img.at(y0, x0) * (1 - fy) * (1 - fx) + img.at(y0, x1) * (1 - fy) * fx +
                     img.at(y1, x0) * fy * (1 - fx) + img.at(y1, x1) * fy * fx;
    }
  const double jitter = rng.uniform(-0.1, 0.1);
  for (auto& p : out.data) p = std::clamp(p + jitter, 0.0, 1.0);
  return out;
}

}  // namespace fedrg
