// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedrg/rng.hpp"
#include "fedrg/tensor.hpp"

namespace fedrg {

inline constexpr int kNumDiseases = 14;
inline constexpr int kNumStates = 4;
inline constexpr int kImageSize = 32;
inline constexpr int kNumTrainClusters = 4;
inline constexpr int kUnseenCluster = 4;   // held out of every training profile
inline constexpr int kNeutralCluster = 5;  // pretraining corpus style

enum class DiseaseState : std::uint8_t { BLA = 0, POS = 1, NEG = 2, UNC = 3 };

using DiseaseLabelVector = std::array<DiseaseState, kNumDiseases>;

struct ClientProfile {
  int client_id = 0;
  double blur_sigma = 0.0;        // gaussian blur
  double contrast_scale = 1.0;    // about 0.5
  double brightness_offset = 0.0;
  int style_cluster = 0;          // home cluster; random mode mixes styles per sample
  int sample_count = 0;
};

struct Sample {
  Tensor image;  // [32,32], values in [0,1]
  std::vector<std::string> report;
  DiseaseLabelVector labels{};
  int style_cluster = 0;
};

struct ClientDataset {
  ClientProfile profile;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

enum class PartitionMode { Random, Cluster, Dirichlet };

struct FederationSpec {
  int n_clients = 4;
  PartitionMode mode = PartitionMode::Cluster;
  double dirichlet_alpha = 0.5;
  int samples_per_client = 500;
  int min_samples = 400;  // dirichlet resampling bounds
  int max_samples = 700;
  double train_fraction = 0.9;
  int test_per_client = 50;
  int unseen_test_size = 100;
  std::uint64_t seed = 1;
};

struct Federation {
  std::vector<ClientDataset> clients;
  std::vector<Sample> in_domain_test;
  std::vector<Sample> unseen_test;
};

// --- report templates -------------------------------------------------------

// Closed template set: 6 style clusters (4 train, 1 unseen, 1 neutral), one
// phrase per (disease, state != BLA) per cluster, plus cluster fillers and a
// cluster-specific sentence order.
const std::vector<std::string>& disease_names();
std::vector<std::string> phrase_tokens(int disease, DiseaseState state, int cluster);
const std::vector<std::string>& vocabulary();  // sorted, deduplicated corpus words

std::vector<std::string> render_report(const DiseaseLabelVector& labels, int style_cluster);

// Inverse of render_report by phrase scanning across every cluster's
// template set. Conflicts resolve POS > UNC > NEG; `conflict_warnings`
// (optional) counts them.
DiseaseLabelVector oracle_label(const std::vector<std::string>& report,
                                int* conflict_warnings = nullptr);

// --- images -----------------------------------------------------------------

// Noise canvas plus one deterministic glyph per POS disease, pre-transform.
Tensor render_canvas(const DiseaseLabelVector& labels, std::uint64_t seed);
// blur -> contrast about 0.5 -> brightness -> clamp [0,1]
Tensor apply_profile_transform(const Tensor& image, const ClientProfile& profile);
Tensor render_image(const DiseaseLabelVector& labels, const ClientProfile& profile,
                    std::uint64_t seed);
// Bounding box of a disease glyph: {row0, col0, row1, col1} (exclusive ends).
std::array<int, 4> glyph_box(int disease);

Tensor gaussian_blur(const Tensor& image, double sigma);

// --- sampling / partitioning ------------------------------------------------

DiseaseLabelVector sample_labels(Rng& rng, const std::vector<double>& pos_tilt);
std::vector<double> cluster_tilt(int cluster);

// Per-class Dirichlet(alpha) proportions over clients; resamples until all
// client counts land in [min,max].
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& class_ids, double alpha,
                                                  int n_clients, int min_per_client,
                                                  int max_per_client, Rng& rng);

Federation gen_federation(const FederationSpec& spec);

// Neutral-style corpus for decoder pretraining.
std::vector<Sample> gen_pretrain_corpus(int n, std::uint64_t seed);

void export_dataset(const Federation& fed, const std::string& dir);

}  // namespace fedrg
