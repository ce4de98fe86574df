// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedrg/autodiff.hpp"

namespace fedrg {

// Checkpoint format: a raw blob of little-endian f32 values plus a JSON
// manifest listing {name, shape, offset, byte_len, partition} per entry.
// The 4-bytes-per-parameter convention is what the communication ledger
// counts.
struct Checkpoint {
  std::vector<std::uint8_t> blob;
  std::string manifest;  // JSON text

  std::size_t total_bytes() const { return blob.size() + manifest.size(); }
};

// Serializes all parameters whose partition tag is in `partitions`
// (empty set = everything), in name order.
Checkpoint serialize_params(const ParameterSet& params, const std::set<std::string>& partitions = {});

// Loads blob values back into matching parameters. Every manifest entry
// must exist in `params` with the same shape; partition tags are checked.
void deserialize_params(const Checkpoint& ckpt, ParameterSet& params);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path_prefix);
Checkpoint load_checkpoint(const std::string& path_prefix);

// Exact payload size of a partition subset without keeping the blob around.
std::size_t payload_bytes(const ParameterSet& params, const std::set<std::string>& partitions = {});

}  // namespace fedrg
