// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fedrg/autodiff.hpp"
#include "fedrg/rng.hpp"

namespace fedrg {

// Injection sites: the query and value projections of every decoder layer.
// Site names look like "l0.q", "l1.v".
std::vector<std::string> adapter_sites(int n_layers);

struct AdapterMode {
  enum class Kind { None, GenericOnly, SpecializedOnly, Combined };
  Kind kind = Kind::GenericOnly;
  double alpha_inf = 0.5;

  static AdapterMode none() { return {Kind::None, 0.0}; }
  static AdapterMode generic_only() { return {Kind::GenericOnly, 0.0}; }
  static AdapterMode specialized_only() { return {Kind::SpecializedOnly, 0.0}; }
  static AdapterMode combined(double alpha);
};

// Parameter names. Generic adapter: adapter_g.<site>.{down,up}. The
// specialized adapter is a frozen inherited copy plus a trainable local
// extension: adapter_s.inh.<site>.* / adapter_s.loc.<site>.*.
std::string generic_param(const std::string& site, const std::string& which);
std::string inherited_param(const std::string& site, const std::string& which);
std::string local_param(const std::string& site, const std::string& which);

// Inserts freshly initialized adapters for every site. down ~ N(0, 0.02),
// up = 0 so the initial delta is exactly zero.
void init_generic_adapter(ParameterSet& ps, int n_layers, int d_in, int d_out, int rank, Rng& rng);
void init_specialized_adapter(ParameterSet& ps, int n_layers, int d_in, int d_out, int rank,
                              Rng& rng);

// inherited <- deep copy of the generic adapter (stays frozen); the local
// extension is untouched.
void inherit_from_generic(ParameterSet& ps, int n_layers);

// --- tape ops ---------------------------------------------------------------

// up . (down . x) for one factor pair; x is [T, d_in] row-major activations.
Tape::NodeId lora_delta(Tape& t, Tape::NodeId x, Tape::NodeId down, Tape::NodeId up);

// y = x W^T + delta(x) without ever materializing W + up*down.
Tape::NodeId apply_site(Tape& t, const ParameterSet& ps, Tape::NodeId w, Tape::NodeId x,
                        const std::string& site, const AdapterMode& mode);

// inherited(x) + local(x)
Tape::NodeId specialized_delta(Tape& t, const ParameterSet& ps, Tape::NodeId x,
                               const std::string& site);

// alpha * generic(x) + (1 - alpha) * specialized(x)
Tape::NodeId combined_delta(Tape& t, const ParameterSet& ps, Tape::NodeId x,
                            const std::string& site, double alpha_inf);

// --- no-grad path (inference / KV-cached decoding) --------------------------

// delta for a single activation row x (length d_in); returns length d_out.
std::vector<double> adapter_delta_nograd(const ParameterSet& ps, const double* x, int d_in,
                                         const std::string& site, const AdapterMode& mode);

// Trainable parameter count of one site, r*(d_in + d_out).
long site_param_count(int d_in, int d_out, int rank);

}  // namespace fedrg
