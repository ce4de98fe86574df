// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/adapters.hpp"

#include <stdexcept>

namespace fedrg {

std::vector<std::string> adapter_sites(int n_layers) {
  std::vector<std::string> sites;
  for (int l = 0; l < n_layers; ++l) {
    sites.push_back("l" + std::to_string(l) + ".q");
    sites.push_back("l" + std::to_string(l) + ".v");
  }
  return sites;
}

AdapterMode AdapterMode::combined(double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("AdapterMode::combined: alpha_inf must be in [0,1]");
  return {Kind::Combined, alpha};
}

std::string generic_param(const std::string& site, const std::string& which) {
  return "adapter_g." + site + "." + which;
}
std::string inherited_param(const std::string& site, const std::string& which) {
  return "adapter_s.inh." + site + "." + which;
}
std::string local_param(const std::string& site, const std::string& which) {
  return "adapter_s.loc." + site + "." + which;
}

namespace {
void init_pair(ParameterSet& ps, const std::string& down_name, const std::string& up_name,
               int d_in, int d_out, int rank, bool trainable, const std::string& partition,
               Rng& rng) {
  ps[down_name] = {Tensor::randn({rank, d_in}, rng, 0.02), trainable, partition};
  ps[up_name] = {Tensor::zeros({d_out, rank}), trainable, partition};
}
}  // namespace

void init_generic_adapter(ParameterSet& ps, int n_layers, int d_in, int d_out, int rank, Rng& rng) {
  for (const auto& site : adapter_sites(n_layers))
    init_pair(ps, generic_param(site, "down"), generic_param(site, "up"), d_in, d_out, rank, true,
              "adapter_g", rng);
}

void init_specialized_adapter(ParameterSet& ps, int n_layers, int d_in, int d_out, int rank,
                              Rng& rng) {
  for (const auto& site : adapter_sites(n_layers)) {
    init_pair(ps, inherited_param(site, "down"), inherited_param(site, "up"), d_in, d_out, rank,
              false, "adapter_s", rng);
    init_pair(ps, local_param(site, "down"), local_param(site, "up"), d_in, d_out, rank, true,
              "adapter_s", rng);
  }
}

void inherit_from_generic(ParameterSet& ps, int n_layers) {
  for (const auto& site : adapter_sites(n_layers)) {
    for (const char* which : {"down", "up"}) {
      auto git = ps.find(generic_param(site, which));
      auto iit = ps.find(inherited_param(site, which));
      if (git == ps.end() || iit == ps.end())
        throw std::invalid_argument("inherit_from_generic: adapter structure mismatch at " + site);
      if (!git->second.value.same_shape(iit->second.value))
        throw std::invalid_argument("inherit_from_generic: shape mismatch at " + site);
      iit->second.value = git->second.value;
      iit->second.trainable = false;
    }
  }
}

Tape::NodeId lora_delta(Tape& t, Tape::NodeId x, Tape::NodeId down, Tape::NodeId up) {
  // x [T,d_in], down [r,d_in], up [d_out,r] -> [T,d_out]
  return t.matmul(t.matmul(x, t.transpose(down)), t.transpose(up));
}

Tape::NodeId specialized_delta(Tape& t, const ParameterSet& ps, Tape::NodeId x,
                               const std::string& site) {
  auto inh = lora_delta(t, x, t.param(ps, inherited_param(site, "down")),
                        t.param(ps, inherited_param(site, "up")));
  auto loc = lora_delta(t, x, t.param(ps, local_param(site, "down")),
                        t.param(ps, local_param(site, "up")));
  return t.add(inh, loc);
}

Tape::NodeId combined_delta(Tape& t, const ParameterSet& ps, Tape::NodeId x,
                            const std::string& site, double alpha_inf) {
  if (alpha_inf < 0.0 || alpha_inf > 1.0)
    throw std::invalid_argument("combined_delta: alpha_inf must be in [0,1]");
  auto g = lora_delta(t, x, t.param(ps, generic_param(site, "down")),
                      t.param(ps, generic_param(site, "up")));
  auto s = specialized_delta(t, ps, x, site);
  return t.add(t.scale(g, alpha_inf), t.scale(s, 1.0 - alpha_inf));
}

Tape::NodeId apply_site(Tape& t, const ParameterSet& ps, Tape::NodeId w, Tape::NodeId x,
                        const std::string& site, const AdapterMode& mode) {
  auto base = t.matmul(x, t.transpose(w));
  switch (mode.kind) {
    case AdapterMode::Kind::None:
      return base;
    case AdapterMode::Kind::GenericOnly:
      return t.add(base, lora_delta(t, x, t.param(ps, generic_param(site, "down")),
                                    t.param(ps, generic_param(site, "up"))));
    case AdapterMode::Kind::SpecializedOnly:
      return t.add(base, specialized_delta(t, ps, x, site));
    case AdapterMode::Kind::Combined:
      return t.add(base, combined_delta(t, ps, x, site, mode.alpha_inf));
  }
  throw std::logic_error("apply_site: unreachable");
}

namespace {
// out += up . (down . x)
void accum_pair_nograd(const ParameterSet& ps, const std::string& down_name,
                       const std::string& up_name, const double* x, int d_in,
                       std::vector<double>& out, double scale) {
  const Tensor& down = ps.at(down_name).value;
  const Tensor& up = ps.at(up_name).value;
  if (down.shape[1] != d_in || up.shape[0] != static_cast<int>(out.size()))
    throw std::invalid_argument("adapter_delta_nograd: dimension mismatch");
  const int r = down.shape[0], d_out = up.shape[0];
  std::vector<double> z(static_cast<std::size_t>(r), 0.0);
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < d_in; ++j) z[static_cast<std::size_t>(k)] += down.at(k, j) * x[j];
  for (int i = 0; i < d_out; ++i) {
    double s = 0.0;
    for (int k = 0; k < r; ++k) s += up.at(i, k) * z[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] += scale * s;
  }
}
}  // namespace

std::vector<double> adapter_delta_nograd(const ParameterSet& ps, const double* x, int d_in,
                                         const std::string& site, const AdapterMode& mode) {
  const int d_out =
      mode.kind == AdapterMode::Kind::None
          ? d_in
          : ps.at(mode.kind == AdapterMode::Kind::SpecializedOnly ? inherited_param(site, "up")
                                                                  : generic_param(site, "up"))
                .value.shape[0];
  std::vector<double> out(static_cast<std::size_t>(d_out), 0.0);
  switch (mode.kind) {
    case AdapterMode::Kind::None:
      break;
    case AdapterMode::Kind::GenericOnly:
      accum_pair_nograd(ps, generic_param(site, "down"), generic_param(site, "up"), x, d_in, out, 1.0);
      break;
    case AdapterMode::Kind::SpecializedOnly:
      accum_pair_nograd(ps, inherited_param(site, "down"), inherited_param(site, "up"), x, d_in, out, 1.0);
      accum_pair_nograd(ps, local_param(site, "down"), local_param(site, "up"), x, d_in, out, 1.0);
      break;
    case AdapterMode::Kind::Combined:
      accum_pair_nograd(ps, generic_param(site, "down"), generic_param(site, "up"), x, d_in, out,
                        mode.alpha_inf);
      accum_pair_nograd(ps, inherited_param(site, "down"), inherited_param(site, "up"), x, d_in, out,
                        1.0 - mode.alpha_inf);
      accum_pair_nograd(ps, local_param(site, "down"), local_param(site, "up"), x, d_in, out,
                        1.0 - mode.alpha_inf);
      break;
  }
  return out;
}

long site_param_count(int d_in, int d_out, int rank) {
  return static_cast<long>(rank) * (d_in + d_out);
}

}  // namespace fedrg
