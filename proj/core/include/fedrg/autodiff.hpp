// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedrg/tensor.hpp"

namespace fedrg {

struct Param {
  Tensor value;
  bool trainable = true;
  std::string partition;  // encoder | classifier | projection | base | adapter_g | adapter_s
};

// Ordered by name so that every iteration (serialization, optimizer steps,
// aggregation) is deterministic.
using ParameterSet = std::map<std::string, Param>;
using GradMap = std::map<std::string, Tensor>;

// Reverse-mode tape. One tape per forward/backward pass; node ids are
// indices into the tape's node list.
class Tape {
 public:
  using NodeId = int;

  NodeId constant(Tensor v);
  NodeId leaf(Tensor v, const std::string& param_name, bool trainable);
  // Leaf for a named parameter; cached so repeated use shares one node.
  NodeId param(const ParameterSet& ps, const std::string& name);

  const Tensor& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor& grad(NodeId id);
  bool has_grad(NodeId id) const { return !nodes_[static_cast<std::size_t>(id)].grad.data.empty(); }

  // Populates gradients for every trainable parameter reachable from loss.
  GradMap backward(NodeId loss);

  std::size_t node_count() const { return nodes_.size(); }

  // --- op constructors ---
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add_row_broadcast(NodeId a, NodeId bias);  // [m,n] + [n]
  NodeId relu(NodeId a);
  NodeId gelu(NodeId a);
  NodeId exp(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId rowwise_sum(NodeId a);   // [m,n] -> [m,1]
  NodeId mean_rows(NodeId a);     // [m,n] -> [1,n]
  NodeId log_softmax_rows(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId logsumexp_rows(NodeId a);  // [m,n] -> [m,1]
  NodeId layernorm_rows(NodeId a, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId gather_rows(NodeId table, const std::vector<int>& idx);
  NodeId slice_rows(NodeId a, int r0, int r1);
  NodeId slice_cols(NodeId a, int c0, int c1);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId l2_normalize_row(NodeId a);  // [1,n]; zero-norm guard returns e1
  NodeId stop_grad(NodeId a);
  NodeId reshape(NodeId a, std::vector<int> shape);
  // -(1/#unmasked) * sum over unmasked i of logp[i, target[i]]
  NodeId pick_nll(NodeId logp, const std::vector<int>& targets, const std::vector<bool>& mask);
  // mean over rows of (1 - cos(a_i, b_i)); zero-norm rows contribute 1 with no gradient
  NodeId cos_embed_loss(NodeId a, NodeId b);

  // y = x @ W^T + b with W stored [out, in]
  NodeId linear(NodeId x, NodeId w, NodeId b);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    std::string param_name;
    bool trainable = false;
    std::function<void(Tape&)> backprop;  // empty for leaves/constants
  };

  NodeId push(Tensor value, std::function<void(Tape&)> backprop = nullptr);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> param_cache_;
};

}  // namespace fedrg
