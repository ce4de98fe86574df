// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fedrg {

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs_diff(const Tensor& o) const {
  if (!same_shape(o)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) m = std::max(m, std::abs(data[i] - o.data[i]));
  return m;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(Tensor v) { return push(std::move(v)); }

Tape::NodeId Tape::leaf(Tensor v, const std::string& param_name, bool trainable) {
  NodeId id = push(std::move(v));
  nodes_[static_cast<std::size_t>(id)].param_name = param_name;
  nodes_[static_cast<std::size_t>(id)].trainable = trainable;
  return id;
}

Tape::NodeId Tape::param(const ParameterSet& ps, const std::string& name) {
  auto it = param_cache_.find(name);
  if (it != param_cache_.end()) return it->second;
  auto pit = ps.find(name);
  if (pit == ps.end()) throw std::invalid_argument("Tape::param: unknown parameter " + name);
  NodeId id = leaf(pit->second.value, name, pit->second.trainable);
  param_cache_.emplace(name, id);
  return id;
}

Tensor& Tape::grad(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

GradMap Tape::backward(NodeId loss) {
  const Node& ln = nodes_[static_cast<std::size_t>(loss)];
  if (!ln.value.is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
  grad(loss).data[0] = 1.0;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backprop && !n.grad.data.empty()) n.backprop(*this);
  }
  GradMap out;
  for (const Node& n : nodes_) {
    if (!n.trainable || n.param_name.empty()) continue;
    if (n.grad.data.empty()) continue;  // e.g. reachable only through stop_grad
    out[n.param_name] = n.grad;
  }
  return out;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}
}  // namespace

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor &ga = t.grad(a), &gb = t.grad(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  };
  return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor &ga = t.grad(a), &gb = t.grad(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  };
  return id;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor &va = t.val(a), &vb = t.val(b);
    Tensor &ga = t.grad(a), &gb = t.grad(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * vb.data[i];
      gb.data[i] += g.data[i] * va.data[i];
    }
  };
  return id;
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Tensor out = val(a);
  for (auto& x : out.data) x *= c;
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, c](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
  };
  return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor &ta = val(a), &tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(ta.shape) + " x " +
                                shape_str(tb.shape));
  const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  const double* A = ta.data.data();
  const double* B = tb.data.data();
  double* C = out.data.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = A[static_cast<std::size_t>(i) * k + p];
      const double* brow = B + static_cast<std::size_t>(p) * n;
      double* crow = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, b, m, k, n](Tape& t) {
    const double* G = t.grad(id).data.data();
    const double* A = t.val(a).data.data();
    const double* B = t.val(b).data.data();
    double* GA = t.grad(a).data.data();
    double* GB = t.grad(b).data.data();
    // dA = G * B^T
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double gv = G[static_cast<std::size_t>(i) * n + j];
        if (gv == 0.0) continue;
        const double* brow = B;
        for (int p = 0; p < k; ++p)
          GA[static_cast<std::size_t>(i) * k + p] += gv * brow[static_cast<std::size_t>(p) * n + j];
      }
    // dB = A^T * G
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) {
        const double av = A[static_cast<std::size_t>(i) * k + p];
        if (av == 0.0) continue;
        const double* grow = G + static_cast<std::size_t>(i) * n;
        double* gbrow = GB + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
      }
  };
  return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2) throw std::invalid_argument("transpose: rank-2 only");
  const int m = ta.shape[0], n = ta.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  };
  return id;
}

Tape::NodeId Tape::add_row_broadcast(NodeId a, NodeId bias) {
  const Tensor &ta = val(a), &tb = val(bias);
  const int m = ta.shape[0], n = ta.shape.size() == 2 ? ta.shape[1] : 1;
  if (tb.size() != n) throw std::invalid_argument("add_row_broadcast: bias length mismatch");
  Tensor out = ta;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(i) * n + j] += tb.data[static_cast<std::size_t>(j)];
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, bias, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor &ga = t.grad(a), &gb = t.grad(bias);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double gv = g.data[static_cast<std::size_t>(i) * n + j];
        ga.data[static_cast<std::size_t>(i) * n + j] += gv;
        gb.data[static_cast<std::size_t>(j)] += gv;
      }
  };
  return id;
}

Tape::NodeId Tape::relu(NodeId a) {
  Tensor out = val(a);
  for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (va.data[i] > 0.0) ga.data[i] += g.data[i];
  };
  return id;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
double gelu_f(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}
double gelu_df(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}
}  // namespace

Tape::NodeId Tape::gelu(NodeId a) {
  Tensor out = val(a);
  for (auto& x : out.data) x = gelu_f(x);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * gelu_df(va.data[i]);
  };
  return id;
}

Tape::NodeId Tape::exp(NodeId a) {
  Tensor out = val(a);
  for (auto& x : out.data) x = std::exp(x);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& v = t.val(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * v.data[i];
  };
  return id;
}

Tape::NodeId Tape::sum(NodeId a) {
  double s = 0.0;
  for (double x : val(a).data) s += x;
  NodeId id = push(Tensor::scalar(s));
  nodes_.back().backprop = [id, a](Tape& t) {
    const double g = t.grad(id).data[0];
    Tensor& ga = t.grad(a);
    for (auto& x : ga.data) x += g;
  };
  return id;
}

Tape::NodeId Tape::mean(NodeId a) {
  const double n = static_cast<double>(val(a).size());
  return scale(sum(a), 1.0 / n);
}

Tape::NodeId Tape::rowwise_sum(NodeId a) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  Tensor out = Tensor::zeros({m, 1});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(i)] += ta.at(i, j);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.data[static_cast<std::size_t>(i)];
  };
  return id;
}

Tape::NodeId Tape::mean_rows(NodeId a) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  Tensor out = Tensor::zeros({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(j)] += ta.at(i, j) / m;
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.data[static_cast<std::size_t>(j)] / m;
  };
  return id;
}

Tape::NodeId Tape::log_softmax_rows(NodeId a) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  Tensor out = ta;
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, ta.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(ta.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) out.at(i, j) = ta.at(i, j) - lse;
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& y = t.val(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i) {
      double gs = 0.0;
      for (int j = 0; j < n; ++j) gs += g.at(i, j);
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
    }
  };
  return id;
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  Tensor out = ta;
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, ta.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(ta.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& y = t.val(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < n; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return id;
}

Tape::NodeId Tape::logsumexp_rows(NodeId a) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  Tensor out = Tensor::zeros({m, 1});
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, ta.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(ta.at(i, j) - mx);
    out.data[static_cast<std::size_t>(i)] = mx + std::log(z);
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, m, n](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.val(a);
    const Tensor& lse = t.val(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i) {
      const double gv = g.data[static_cast<std::size_t>(i)];
      if (gv == 0.0) continue;
      for (int j = 0; j < n; ++j)
        ga.at(i, j) += gv * std::exp(va.at(i, j) - lse.data[static_cast<std::size_t>(i)]);
    }
  };
  return id;
}

Tape::NodeId Tape::layernorm_rows(NodeId a, NodeId gain, NodeId bias, double eps) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0], n = ta.cols();
  if (val(gain).size() != n || val(bias).size() != n)
    throw std::invalid_argument("layernorm_rows: gain/bias length mismatch");
  Tensor out = ta;
  Tensor mu = Tensor::zeros({m}), inv = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += ta.at(i, j);
    const double mean = s / n;
    double v = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = ta.at(i, j) - mean;
      v += d * d;
    }
    const double istd = 1.0 / std::sqrt(v / n + eps);
    mu.data[static_cast<std::size_t>(i)] = mean;
    inv.data[static_cast<std::size_t>(i)] = istd;
    for (int j = 0; j < n; ++j)
      out.at(i, j) = (ta.at(i, j) - mean) * istd * val(gain).data[static_cast<std::size_t>(j)] +
                     val(bias).data[static_cast<std::size_t>(j)];
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, gain, bias, m, n, mu, inv](Tape& t) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.val(a);
    const Tensor& vg = t.val(gain);
    Tensor &ga = t.grad(a), &gg = t.grad(gain), &gb = t.grad(bias);
    for (int i = 0; i < m; ++i) {
      const double mean = mu.data[static_cast<std::size_t>(i)];
      const double istd = inv.data[static_cast<std::size_t>(i)];
      double sum_gy = 0.0, sum_gyx = 0.0;
      for (int j = 0; j < n; ++j) {
        const double xhat = (va.at(i, j) - mean) * istd;
        const double gy = g.at(i, j) * vg.data[static_cast<std::size_t>(j)];
        sum_gy += gy;
        sum_gyx += gy * xhat;
        gg.data[static_cast<std::size_t>(j)] += g.at(i, j) * xhat;
        gb.data[static_cast<std::size_t>(j)] += g.at(i, j);
      }
      for (int j = 0; j < n; ++j) {
        const double xhat = (va.at(i, j) - mean) * istd;
        const double gy = g.at(i, j) * vg.data[static_cast<std::size_t>(j)];
        ga.at(i, j) += istd * (gy - sum_gy / n - xhat * sum_gyx / n);
      }
    }
  };
  return id;
}

Tape::NodeId Tape::gather_rows(NodeId table, const std::vector<int>& idx) {
  const Tensor& tt = val(table);
  const int n = tt.cols();
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), n});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= tt.shape[0]) throw std::out_of_range("gather_rows: index");
    for (int j = 0; j < n; ++j) out.at(static_cast<int>(i), j) = tt.at(idx[i], j);
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, table, idx, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& gt = t.grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < n; ++j) gt.at(idx[i], j) += g.at(static_cast<int>(i), j);
  };
  return id;
}

Tape::NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
  const Tensor& ta = val(a);
  const int n = ta.cols();
  if (r0 < 0 || r1 > ta.shape[0] || r0 >= r1) throw std::out_of_range("slice_rows: range");
  Tensor out = Tensor::zeros({r1 - r0, n});
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < n; ++j) out.at(i - r0, j) = ta.at(i, j);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, r0, r1, n](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(i - r0, j);
  };
  return id;
}

Tape::NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
  const Tensor& ta = val(a);
  const int m = ta.shape[0];
  if (c0 < 0 || c1 > ta.cols() || c0 >= c1) throw std::out_of_range("slice_cols: range");
  Tensor out = Tensor::zeros({m, c1 - c0});
  for (int i = 0; i < m; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = ta.at(i, j);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a, c0, c1, m](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) ga.at(i, j) += g.at(i, j - c0);
  };
  return id;
}

Tape::NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int n = val(parts[0]).cols();
  int m = 0;
  for (NodeId p : parts) {
    if (val(p).cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
    m += val(p).shape[0];
  }
  Tensor out = Tensor::zeros({m, n});
  int r = 0;
  for (NodeId p : parts) {
    const Tensor& tp = val(p);
    for (int i = 0; i < tp.shape[0]; ++i)
      for (int j = 0; j < n; ++j) out.at(r + i, j) = tp.at(i, j);
    r += tp.shape[0];
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, parts, n](Tape& t) {
    const Tensor& g = t.grad(id);
    int r = 0;
    for (NodeId p : parts) {
      Tensor& gp = t.grad(p);
      const int rows = t.val(p).shape[0];
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) gp.at(i, j) += g.at(r + i, j);
      r += rows;
    }
  };
  return id;
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int m = val(parts[0]).shape[0];
  int n = 0;
  for (NodeId p : parts) {
    if (val(p).shape[0] != m) throw std::invalid_argument("concat_cols: row mismatch");
    n += val(p).cols();
  }
  Tensor out = Tensor::zeros({m, n});
  int c = 0;
  for (NodeId p : parts) {
    const Tensor& tp = val(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < tp.cols(); ++j) out.at(i, c + j) = tp.at(i, j);
    c += tp.cols();
  }
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, parts, m](Tape& t) {
    const Tensor& g = t.grad(id);
    int c = 0;
    for (NodeId p : parts) {
      Tensor& gp = t.grad(p);
      const int cols = t.val(p).cols();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < cols; ++j) gp.at(i, j) += g.at(i, c + j);
      c += cols;
    }
  };
  return id;
}

Tape::NodeId Tape::l2_normalize_row(NodeId a) {
  const Tensor& ta = val(a);
  if (ta.shape[0] != 1) throw std::invalid_argument("l2_normalize_row: expects [1,n]");
  const int n = ta.cols();
  double nrm = 0.0;
  for (double x : ta.data) nrm += x * x;
  nrm = std::sqrt(nrm);
  Tensor out = Tensor::zeros({1, n});
  const bool degenerate = nrm < 1e-12;
  if (degenerate) {
    out.data[0] = 1.0;  // e1 fallback
  } else {
    for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(j)] = ta.data[static_cast<std::size_t>(j)] / nrm;
  }
  NodeId id = push(std::move(out));
  if (!degenerate) {
    nodes_.back().backprop = [id, a, n, nrm](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& y = t.val(id);
      Tensor& ga = t.grad(a);
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g.data[static_cast<std::size_t>(j)] * y.data[static_cast<std::size_t>(j)];
      for (int j = 0; j < n; ++j)
        ga.data[static_cast<std::size_t>(j)] +=
            (g.data[static_cast<std::size_t>(j)] - y.data[static_cast<std::size_t>(j)] * dot) / nrm;
    };
  }
  return id;
}

Tape::NodeId Tape::stop_grad(NodeId a) { return push(val(a)); }

Tape::NodeId Tape::reshape(NodeId a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (Tensor::numel(shape) != ta.size()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(std::move(shape), ta.data);
  NodeId id = push(std::move(out));
  nodes_.back().backprop = [id, a](Tape& t) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  };
  return id;
}

Tape::NodeId Tape::pick_nll(NodeId logp, const std::vector<int>& targets,
                            const std::vector<bool>& mask) {
  const Tensor& lp = val(logp);
  const int m = lp.shape[0], n = lp.cols();
  if (static_cast<int>(targets.size()) != m || static_cast<int>(mask.size()) != m)
    throw std::invalid_argument("pick_nll: length mismatch");
  int cnt = 0;
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    if (targets[static_cast<std::size_t>(i)] < 0 || targets[static_cast<std::size_t>(i)] >= n)
      throw std::out_of_range("pick_nll: target index");
    s -= lp.at(i, targets[static_cast<std::size_t>(i)]);
    ++cnt;
  }
  const int denom = cnt > 0 ? cnt : 1;
  NodeId id = push(Tensor::scalar(s / denom));
  nodes_.back().backprop = [id, logp, targets, mask, denom](Tape& t) {
    const double g = t.grad(id).data[0];
    Tensor& gl = t.grad(logp);
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (mask[i]) gl.at(static_cast<int>(i), targets[i]) -= g / denom;
  };
  return id;
}

Tape::NodeId Tape::cos_embed_loss(NodeId a, NodeId b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_same_shape(ta, tb, "cos_embed_loss");
  const int m = ta.shape[0], n = ta.cols();
  double loss = 0.0;
  std::vector<double> na(static_cast<std::size_t>(m)), nb(static_cast<std::size_t>(m)),
      cs(static_cast<std::size_t>(m));
  std::vector<bool> ok(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double sa = 0.0, sb = 0.0, d = 0.0;
    for (int j = 0; j < n; ++j) {
      sa += ta.at(i, j) * ta.at(i, j);
      sb += tb.at(i, j) * tb.at(i, j);
      d += ta.at(i, j) * tb.at(i, j);
    }
    na[static_cast<std::size_t>(i)] = std::sqrt(sa);
    nb[static_cast<std::size_t>(i)] = std::sqrt(sb);
    ok[static_cast<std::size_t>(i)] = sa > 1e-24 && sb > 1e-24;
    const double c = ok[static_cast<std::size_t>(i)]
                         ? d / (na[static_cast<std::size_t>(i)] * nb[static_cast<std::size_t>(i)])
                         : 0.0;  // zero-norm rows count as similarity 0
    cs[static_cast<std::size_t>(i)] = c;
    loss += 1.0 - c;
  }
  NodeId id = push(Tensor::scalar(loss / m));
  nodes_.back().backprop = [id, a, b, m, n, na, nb, cs, ok](Tape& t) {
    const double g = t.grad(id).data[0];
    const Tensor &va = t.val(a), &vb = t.val(b);
    Tensor &ga = t.grad(a), &gb = t.grad(b);
    for (int i = 0; i < m; ++i) {
      if (!ok[static_cast<std::size_t>(i)]) continue;
      const double ia = 1.0 / na[static_cast<std::size_t>(i)], ib = 1.0 / nb[static_cast<std::size_t>(i)];
      const double c = cs[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j) {
        // d cos/d a = b/(|a||b|) - cos * a/|a|^2
        ga.at(i, j) += -g / m * (vb.at(i, j) * ia * ib - c * va.at(i, j) * ia * ia);
        gb.at(i, j) += -g / m * (va.at(i, j) * ia * ib - c * vb.at(i, j) * ib * ib);
      }
    }
  };
  return id;
}

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  return add_row_broadcast(matmul(x, transpose(w)), b);
}

}  // namespace fedrg
