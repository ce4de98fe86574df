// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fedrg {

namespace {
void append_f32_le(std::vector<std::uint8_t>& blob, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  blob.push_back(static_cast<std::uint8_t>(bits & 0xff));
  blob.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
  blob.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xff));
  blob.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xff));
}

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
}  // namespace

Checkpoint serialize_params(const ParameterSet& params, const std::set<std::string>& partitions) {
  Checkpoint ckpt;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, p] : params) {
    if (!partitions.empty() && !partitions.count(p.partition)) continue;
    const std::size_t offset = ckpt.blob.size();
    for (double v : p.value.data) append_f32_le(ckpt.blob, static_cast<float>(v));
    manifest.push_back({{"name", name},
                        {"shape", p.value.shape},
                        {"offset", offset},
                        {"byte_len", p.value.data.size() * 4},
                        {"partition", p.partition}});
  }
  ckpt.manifest = manifest.dump();
  return ckpt;
}

void deserialize_params(const Checkpoint& ckpt, ParameterSet& params) {
  nlohmann::json manifest = nlohmann::json::parse(ckpt.manifest);
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name");
    auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("deserialize_params: unknown parameter " + name);
    Param& p = it->second;
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != p.value.shape)
      throw std::invalid_argument("deserialize_params: shape mismatch for " + name);
    if (entry.at("partition").get<std::string>() != p.partition)
      throw std::invalid_argument("deserialize_params: partition mismatch for " + name);
    const std::size_t offset = entry.at("offset");
    const std::size_t byte_len = entry.at("byte_len");
    if (offset + byte_len > ckpt.blob.size())
      throw std::out_of_range("deserialize_params: blob overrun for " + name);
    if (byte_len != p.value.data.size() * 4)
      throw std::invalid_argument("deserialize_params: byte length mismatch for " + name);
    for (std::size_t i = 0; i < p.value.data.size(); ++i)
      p.value.data[i] = static_cast<double>(read_f32_le(ckpt.blob.data() + offset + i * 4));
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path_prefix) {
  {
    std::ofstream f(path_prefix + ".bin", std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path_prefix + ".bin");
    f.write(reinterpret_cast<const char*>(ckpt.blob.data()),
            static_cast<std::streamsize>(ckpt.blob.size()));
  }
  {
    std::ofstream f(path_prefix + ".manifest.json");
    if (!f) throw std::runtime_error("save_checkpoint: cannot open manifest for " + path_prefix);
    f << ckpt.manifest;
  }
}

Checkpoint load_checkpoint(const std::string& path_prefix) {
  Checkpoint ckpt;
  {
    std::ifstream f(path_prefix + ".bin", std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path_prefix + ".bin");
    ckpt.blob.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  {
    std::ifstream f(path_prefix + ".manifest.json");
    if (!f) throw std::runtime_error("load_checkpoint: cannot open manifest for " + path_prefix);
    ckpt.manifest.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  return ckpt;
}

std::size_t payload_bytes(const ParameterSet& params, const std::set<std::string>& partitions) {
  return serialize_params(params, partitions).total_bytes();
}

}  // namespace fedrg
