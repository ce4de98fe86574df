// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fedrg/autodiff.hpp"
#include "fedrg/rng.hpp"
#include "fedrg/tensor.hpp"

namespace fedrg {

// Bounded FIFO store of unit-norm pooled features tagged with the pushing
// client. Server-owned; clients see an immutable snapshot each round.
struct BankEntry {
  std::vector<double> vec;  // unit norm
  int client_id = 0;
  long round = 0;
  long seq = 0;  // global insertion index, breaks ties within a round
};

class MemoryBank {
 public:
  explicit MemoryBank(int capacity = 512) : capacity_(capacity) {}

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<BankEntry>& entries() const { return entries_; }

  void push_entry(BankEntry e);

  // Flattened [size, dim] matrix of bank vectors.
  Tensor as_matrix(int dim) const;

  // Serialized form: count-prefixed f32 blob plus the client-id array.
  std::vector<std::uint8_t> serialize() const;
  static MemoryBank deserialize(const std::vector<std::uint8_t>& bytes, int capacity);

 private:
  void evict();
  int capacity_;
  std::vector<BankEntry> entries_;
  long next_seq_ = 0;
};

// Uniformly samples (without replacement) up to sample_count of the given
// vectors and appends them; evicts FIFO down to capacity.
void bank_push(MemoryBank& bank, const std::vector<std::vector<double>>& pooled, int client_id,
               long round, int sample_count, Rng& rng);

// Concatenates per-client banks in ascending client-id order (arrival order
// independent), then evicts FIFO to capacity.
MemoryBank bank_merge(const std::vector<MemoryBank>& banks, int capacity);

// Client-aware InfoNCE over pooled features. batch/paired are [1,C] nodes,
// row i of `paired` being the second augmented view of batch row i. Bank
// vectors enter as constants (no gradient). `strict_exclude_positive` drops
// the positive from the denominator (the non-standard reading).
Tape::NodeId hcl_loss(Tape& t, const std::vector<Tape::NodeId>& batch,
                      const std::vector<Tape::NodeId>& paired, const MemoryBank& bank, double tau,
                      bool strict_exclude_positive = false);

// Random horizontal flip, crop-and-resize (>= 75% area), brightness jitter
// +-0.1; deterministic given seed.
Tensor augment(const Tensor& image, std::uint64_t seed);

}  // namespace fedrg
