// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace fedrg {

namespace {

constexpr int kNumClusters = 6;  // 4 train + unseen + neutral

const std::vector<std::string> kDiseases = {
    "atelectasis", "cardiomegaly", "consolidation", "edema",     "effusion",
    "emphysema",   "fibrosis",     "fracture",      "hernia",    "infiltrate",
    "mass",        "nodule",       "pneumonia",     "pneumothorax"};

// Verb phrases per cluster; distinct wording keeps per-cluster style
// measurable while the oracle can still invert every cluster.
const std::vector<std::vector<std::string>> kPosVerbs = {
    {"is", "evident"},          {"appears", "conspicuous"},
    {"is", "demonstrated"},     {"is", "clearly", "depicted"},
    {"shows", "florid", "involvement"}, {"is", "present"}};
const std::vector<std::vector<std::string>> kNegVerbs = {
    {"is", "absent"},           {"appears", "resolved"},
    {"is", "excluded"},         {"is", "nowhere", "depicted"},
    {"shows", "complete", "clearing"},  {"is", "not", "present"}};
const std::vector<std::vector<std::string>> kUncVerbs = {
    {"is", "equivocal"},        {"appears", "borderline"},
    {"is", "suspected"},        {"is", "vaguely", "depicted"},
    {"shows", "indeterminate", "change"}, {"is", "possibly", "present"}};

const std::vector<std::vector<std::vector<std::string>>> kOpenings = {
    {{"frontal", "radiograph", "was", "obtained", "."},
     {"upright", "frontal", "image", "reviewed", "."}},
    {{"portable", "view", "acquired", "at", "bedside", "."},
     {"semi", "erect", "portable", "film", "acquired", "."}},
    {{"comparison", "made", "with", "prior", "imaging", "."},
     {"interval", "comparison", "performed", "."}},
    {{"single", "projection", "of", "the", "chest", "."},
     {"one", "projection", "submitted", "for", "review", "."}},
    {{"outside", "facility", "scan", "submitted", "."},
     {"referred", "outside", "examination", "received", "."}},
    {{"chest", "examination", "performed", "."},
     {"routine", "chest", "examination", "done", "."}}};

const std::vector<std::vector<std::vector<std::string>>> kClosings = {
    {{"clinical", "correlation", "advised", "."},
     {"correlate", "clinically", "as", "needed", "."}},
    {{"findings", "communicated", "to", "the", "team", "."},
     {"results", "relayed", "by", "phone", "."}},
    {{"follow", "up", "as", "indicated", "."},
     {"repeat", "imaging", "if", "symptoms", "persist", "."}},
    {{"report", "dictated", "electronically", "."},
     {"impression", "entered", "into", "record", "."}},
    {{"addendum", "pending", "review", "."},
     {"final", "read", "awaiting", "attending", "."}},
    {{"end", "of", "impression", "."}, {"impression", "complete", "."}}};

const std::vector<std::vector<std::string>> kNormalPhrase = {
    {"the", "study", "is", "within", "normal", "limits", "."},
    {"no", "acute", "abnormality", "identified", "."},
    {"unremarkable", "examination", "overall", "."},
    {"lungs", "remain", "grossly", "clear", "."},
    {"entirely", "pristine", "appearance", "."},
    {"normal", "study", "."}};

// Cluster-specific sentence (disease) orderings.
std::vector<int> cluster_order(int cluster) {
  std::vector<int> order(kNumDiseases);
  switch (cluster) {
    case 1:
      for (int i = 0; i < kNumDiseases; ++i) order[static_cast<std::size_t>(i)] = kNumDiseases - 1 - i;
      break;
    case 2: {
      int k = 0;
      for (int i = 0; i < kNumDiseases; i += 2) order[static_cast<std::size_t>(k++)] = i;
      for (int i = 1; i < kNumDiseases; i += 2) order[static_cast<std::size_t>(k++)] = i;
      break;
    }
    case 3: {
      int k = 0;
      for (int i = 1; i < kNumDiseases; i += 2) order[static_cast<std::size_t>(k++)] = i;
      for (int i = 0; i < kNumDiseases; i += 2) order[static_cast<std::size_t>(k++)] = i;
      break;
    }
    case 4:
      for (int i = 0; i < kNumDiseases; ++i) order[static_cast<std::size_t>(i)] = (i + 7) % kNumDiseases;
      break;
    default:
      for (int i = 0; i < kNumDiseases; ++i) order[static_cast<std::size_t>(i)] = i;
  }
  return order;
}

void check_cluster(int cluster) {
  if (cluster < 0 || cluster >= kNumClusters)
    throw std::invalid_argument("unknown style cluster " + std::to_string(cluster));
}

int non_blank_count(const DiseaseLabelVector& labels) {
  int k = 0;
  for (auto s : labels)
    if (s != DiseaseState::BLA) ++k;
  return k;
}

bool contains_contiguous(const std::vector<std::string>& report,
                         const std::vector<std::string>& phrase) {
  if (phrase.empty() || report.size() < phrase.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= report.size(); ++i) {
    bool hit = true;
    for (std::size_t j = 0; j < phrase.size(); ++j)
      if (report[i + j] != phrase[j]) {
        hit = false;
        break;
      }
    if (hit) return true;
  }
  return false;
}

}  // namespace

const std::vector<std::string>& disease_names() { return kDiseases; }

std::vector<std::string> phrase_tokens(int disease, DiseaseState state, int cluster) {
  check_cluster(cluster);
  if (disease < 0 || disease >= kNumDiseases) throw std::out_of_range("phrase_tokens: disease");
  const std::vector<std::vector<std::string>>* verbs = nullptr;
  switch (state) {
    case DiseaseState::POS: verbs = &kPosVerbs; break;
    case DiseaseState::NEG: verbs = &kNegVerbs; break;
    case DiseaseState::UNC: verbs = &kUncVerbs; break;
    default: throw std::invalid_argument("phrase_tokens: BLA has no phrase");
  }
  std::vector<std::string> out = {kDiseases[static_cast<std::size_t>(disease)]};
  const auto& v = (*verbs)[static_cast<std::size_t>(cluster)];
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::set<std::string> words(kDiseases.begin(), kDiseases.end());
    auto take = [&](const auto& nested) {
      for (const auto& x : nested)
        for (const auto& y : x) {
          if constexpr (std::is_same_v<std::decay_t<decltype(y)>, std::string>)
            words.insert(y);
          else
            words.insert(y.begin(), y.end());
        }
    };
    take(kPosVerbs);
    take(kNegVerbs);
    take(kUncVerbs);
    take(kOpenings);
    take(kClosings);
    take(kNormalPhrase);
    return std::vector<std::string>(words.begin(), words.end());
  }();
  return vocab;
}

std::vector<std::string> render_report(const DiseaseLabelVector& labels, int style_cluster) {
  check_cluster(style_cluster);
  const std::size_t c = static_cast<std::size_t>(style_cluster);
  const int findings = non_blank_count(labels);
  const std::size_t variant = static_cast<std::size_t>(findings % 2);
  std::vector<std::string> report = kOpenings[c][variant];
  if (findings == 0) {
    const auto& n = kNormalPhrase[c];
    report.insert(report.end(), n.begin(), n.end());
  } else {
    for (int d : cluster_order(style_cluster)) {
      const DiseaseState s = labels[static_cast<std::size_t>(d)];
      if (s == DiseaseState::BLA) continue;
      auto phrase = phrase_tokens(d, s, style_cluster);
      report.insert(report.end(), phrase.begin(), phrase.end());
      report.push_back(".");
    }
  }
  const auto& close = kClosings[c][variant];
  report.insert(report.end(), close.begin(), close.end());
  return report;
}

DiseaseLabelVector oracle_label(const std::vector<std::string>& report, int* conflict_warnings) {
  DiseaseLabelVector out{};
  out.fill(DiseaseState::BLA);
  int warnings = 0;
  for (int d = 0; d < kNumDiseases; ++d) {
    bool pos = false, neg = false, unc = false;
    for (int c = 0; c < kNumClusters; ++c) {
      if (!pos && contains_contiguous(report, phrase_tokens(d, DiseaseState::POS, c))) pos = true;
      if (!neg && contains_contiguous(report, phrase_tokens(d, DiseaseState::NEG, c))) neg = true;
      if (!unc && contains_contiguous(report, phrase_tokens(d, DiseaseState::UNC, c))) unc = true;
    }
    const int hits = (pos ? 1 : 0) + (neg ? 1 : 0) + (unc ? 1 : 0);
    if (hits > 1) ++warnings;  // precedence POS > UNC > NEG
    if (pos)
      out[static_cast<std::size_t>(d)] = DiseaseState::POS;
    else if (unc)
      out[static_cast<std::size_t>(d)] = DiseaseState::UNC;
    else if (neg)
      out[static_cast<std::size_t>(d)] = DiseaseState::NEG;
  }
  if (conflict_warnings) *conflict_warnings = warnings;
  return out;
}

std::array<int, 4> glyph_box(int disease) {
  if (disease < 0 || disease >= kNumDiseases) throw std::out_of_range("glyph_box: disease");
  const int cell = kImageSize / 4;  // 14 glyphs on a 4x4 grid
  const int r = disease / 4, c = disease % 4;
  return {r * cell + 1, c * cell + 1, r * cell + cell - 1, c * cell + cell - 1};
}

Tensor render_canvas(const DiseaseLabelVector& labels, std::uint64_t seed) {
  Rng rng(seed ^ 0xc0ffee1234abcdULL);
  Tensor img = Tensor::zeros({kImageSize, kImageSize});
  for (auto& p : img.data) p = 0.25 + 0.15 * rng.uniform();
  for (int d = 0; d < kNumDiseases; ++d) {
    if (labels[static_cast<std::size_t>(d)] != DiseaseState::POS) continue;
    const auto box = glyph_box(d);
    // one fixed pseudo-random binary texture per disease: identities are
    // carried by the pattern itself, not only by the grid position
    for (int i = box[0]; i < box[2]; ++i)
      for (int j = box[1]; j < box[3]; ++j) {
        Rng px(static_cast<std::uint64_t>(d) * 0x9e3779b9ULL +
               static_cast<std::uint64_t>(i - box[0]) * 131ULL +
               static_cast<std::uint64_t>(j - box[1]) * 7919ULL);
        img.at(i, j) = px.uniform() < 0.5 ? 0.98 : 0.02;
      }
  }
  return img;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    norm += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= norm;
  const int h = image.shape[0], w = image.shape[1];
  Tensor tmp = Tensor::zeros({h, w}), out = Tensor::zeros({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k)
        s += kernel[static_cast<std::size_t>(k + radius)] * image.at(i, std::clamp(j + k, 0, w - 1));
      tmp.at(i, j) = s;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k)
        s += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(std::clamp(i + k, 0, h - 1), j);
      out.at(i, j) = s;
    }
  return out;
}

Tensor apply_profile_transform(const Tensor& image, const ClientProfile& profile) {
  Tensor out = gaussian_blur(image, profile.blur_sigma);
  for (auto& p : out.data) {
    p = (p - 0.5) * profile.contrast_scale + 0.5 + profile.brightness_offset;
    p = std::clamp(p, 0.0, 1.0);
  }
  return out;
}

Tensor render_image(const DiseaseLabelVector& labels, const ClientProfile& profile,
                    std::uint64_t seed) {
  return apply_profile_transform(render_canvas(labels, seed), profile);
}

DiseaseLabelVector sample_labels(Rng& rng, const std::vector<double>& pos_tilt) {
  // number of non-blank findings; skewed toward sparse reports
  static const double kCountP[] = {0.12, 0.25, 0.28, 0.20, 0.10, 0.05};
  double u = rng.uniform();
  int k = 0;
  for (double p : kCountP) {
    if (u < p) break;
    u -= p;
    ++k;
  }
  k = std::min(k, 5);
  DiseaseLabelVector labels{};
  labels.fill(DiseaseState::BLA);
  std::vector<double> w(static_cast<std::size_t>(kNumDiseases), 1.0);
  if (!pos_tilt.empty())
    for (int d = 0; d < kNumDiseases; ++d) w[static_cast<std::size_t>(d)] += pos_tilt[static_cast<std::size_t>(d)];
  for (int pick = 0; pick < k; ++pick) {
    double total = 0.0;
    for (double x : w) total += x;
    double r = rng.uniform() * total;
    int d = 0;
    for (; d < kNumDiseases - 1; ++d) {
      if (r < w[static_cast<std::size_t>(d)]) break;
      r -= w[static_cast<std::size_t>(d)];
    }
    w[static_cast<std::size_t>(d)] = 0.0;  // without replacement
    const double s = rng.uniform();
    labels[static_cast<std::size_t>(d)] =
        s < 0.6 ? DiseaseState::POS : (s < 0.85 ? DiseaseState::NEG : DiseaseState::UNC);
  }
  return labels;
}

std::vector<double> cluster_tilt(int cluster) {
  std::vector<double> tilt(static_cast<std::size_t>(kNumDiseases), 0.0);
  for (int d = 0; d < kNumDiseases; ++d)
    if (d % kNumTrainClusters == cluster % kNumTrainClusters) tilt[static_cast<std::size_t>(d)] = 4.0;
  return tilt;
}

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& class_ids, double alpha,
                                                  int n_clients, int min_per_client,
                                                  int max_per_client, Rng& rng) {
  if (alpha <= 0.0) throw std::invalid_argument("dirichlet_partition: alpha must be positive");
  if (n_clients < 1) throw std::invalid_argument("dirichlet_partition: need >= 1 client");
  int n_classes = 0;
  for (int c : class_ids) n_classes = std::max(n_classes, c + 1);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    by_class[static_cast<std::size_t>(class_ids[i])].push_back(static_cast<int>(i));

  constexpr int kMaxRetries = 500;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::vector<std::vector<int>> assign(static_cast<std::size_t>(n_clients));
    for (const auto& members : by_class) {
      if (members.empty()) continue;
      const auto props = rng.dirichlet(alpha, n_clients);
      // largest-remainder apportionment of this class across clients
      const int n = static_cast<int>(members.size());
      std::vector<int> counts(static_cast<std::size_t>(n_clients));
      std::vector<std::pair<double, int>> rema;
      int used = 0;
      for (int c = 0; c < n_clients; ++c) {
        const double exact = props[static_cast<std::size_t>(c)] * n;
        counts[static_cast<std::size_t>(c)] = static_cast<int>(exact);
        used += counts[static_cast<std::size_t>(c)];
        rema.push_back({exact - counts[static_cast<std::size_t>(c)], c});
      }
      std::sort(rema.begin(), rema.end(), [](auto& a, auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      for (int r = 0; r < n - used; ++r) ++counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(r)].second)];
      int at = 0;
      for (int c = 0; c < n_clients; ++c)
        for (int k = 0; k < counts[static_cast<std::size_t>(c)]; ++k)
          assign[static_cast<std::size_t>(c)].push_back(members[static_cast<std::size_t>(at++)]);
    }
    bool ok = true;
    for (const auto& a : assign) {
      const int n = static_cast<int>(a.size());
      if (n < min_per_client || n > max_per_client) {
        ok = false;
        break;
      }
    }
    if (ok || n_clients == 1) return assign;
  }
  throw std::runtime_error("dirichlet_partition: bounds infeasible after retries");
}

namespace {

ClientProfile make_profile(int client_id, int style, Rng& rng, int sample_count) {
  ClientProfile p;
  p.client_id = client_id;
  p.blur_sigma = rng.uniform(0.0, 1.0);
  p.contrast_scale = rng.uniform(0.85, 1.2);
  p.brightness_offset = rng.uniform(-0.08, 0.08);
  p.style_cluster = style;
  p.sample_count = sample_count;
  return p;
}

Sample make_sample(const DiseaseLabelVector& labels, int style, const ClientProfile& profile,
                   std::uint64_t seed) {
  Sample s;
  s.labels = labels;
  s.style_cluster = style;
  s.report = render_report(labels, style);
  s.image = render_image(labels, profile, seed);
  return s;
}

int sample_style(PartitionMode mode, int home, Rng& rng) {
  if (mode == PartitionMode::Cluster)
    // dominated by the home cluster with a thin cross-cluster tail
    return rng.uniform() < 0.92 ? home : static_cast<int>(rng.below(kNumTrainClusters));
  return static_cast<int>(rng.below(kNumTrainClusters));
}

}  // namespace

Federation gen_federation(const FederationSpec& spec) {
  if (spec.n_clients < 2) throw std::invalid_argument("gen_federation: n_clients >= 2");
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw std::invalid_argument("gen_federation: train_fraction in (0,1)");
  Rng root(spec.seed);
  Federation fed;

  std::vector<ClientProfile> profiles;
  for (int i = 0; i < spec.n_clients; ++i) {
    Rng prng = Rng(spec.seed).fork(1000 + static_cast<std::uint64_t>(i));
    profiles.push_back(make_profile(i, i % kNumTrainClusters, prng, spec.samples_per_client));
  }

  if (spec.mode == PartitionMode::Dirichlet) {
    // pool first, then label-pattern partition
    const int pool_n = spec.n_clients * spec.samples_per_client;
    Rng pool_rng = root.fork(7);
    std::vector<DiseaseLabelVector> pool_labels;
    std::vector<int> pool_style, class_ids;
    for (int k = 0; k < pool_n; ++k) {
      auto labels = sample_labels(pool_rng, {});
      int primary = kNumDiseases;  // "no positive finding" pattern class
      for (int d = 0; d < kNumDiseases; ++d)
        if (labels[static_cast<std::size_t>(d)] == DiseaseState::POS) {
          primary = d;
          break;
        }
      pool_labels.push_back(labels);
      pool_style.push_back(static_cast<int>(pool_rng.below(kNumTrainClusters)));
      class_ids.push_back(primary);
    }
    Rng part_rng = root.fork(8);
    auto assign = dirichlet_partition(class_ids, spec.dirichlet_alpha, spec.n_clients,
                                      spec.min_samples, spec.max_samples, part_rng);
    for (int i = 0; i < spec.n_clients; ++i) {
      ClientDataset cd;
      cd.profile = profiles[static_cast<std::size_t>(i)];
      cd.profile.sample_count = static_cast<int>(assign[static_cast<std::size_t>(i)].size());
      Rng crng = root.fork(100 + static_cast<std::uint64_t>(i));
      std::vector<Sample> all;
      for (int idx : assign[static_cast<std::size_t>(i)])
        all.push_back(make_sample(pool_labels[static_cast<std::size_t>(idx)],
                                  pool_style[static_cast<std::size_t>(idx)], cd.profile,
                                  crng.next_u64()));
      const auto split = static_cast<std::size_t>(
          std::llround(spec.train_fraction * static_cast<double>(all.size())));
      cd.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(split));
      cd.val.assign(all.begin() + static_cast<std::ptrdiff_t>(split), all.end());
      fed.clients.push_back(std::move(cd));
    }
  } else {
    for (int i = 0; i < spec.n_clients; ++i) {
      ClientDataset cd;
      cd.profile = profiles[static_cast<std::size_t>(i)];
      Rng crng = root.fork(100 + static_cast<std::uint64_t>(i));
      const auto tilt = spec.mode == PartitionMode::Cluster
                            ? cluster_tilt(cd.profile.style_cluster)
                            : std::vector<double>{};
      std::vector<Sample> all;
      for (int k = 0; k < spec.samples_per_client; ++k) {
        const int style = sample_style(spec.mode, cd.profile.style_cluster, crng);
        all.push_back(make_sample(sample_labels(crng, tilt), style, cd.profile, crng.next_u64()));
      }
      const auto split = static_cast<std::size_t>(
          std::llround(spec.train_fraction * static_cast<double>(all.size())));
      cd.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(split));
      cd.val.assign(all.begin() + static_cast<std::ptrdiff_t>(split), all.end());
      fed.clients.push_back(std::move(cd));
    }
  }

  // shared in-domain test: union over every client's generator settings
  for (int i = 0; i < spec.n_clients; ++i) {
    Rng trng = root.fork(5000 + static_cast<std::uint64_t>(i));
    const auto& profile = fed.clients[static_cast<std::size_t>(i)].profile;
    const auto tilt = spec.mode == PartitionMode::Cluster ? cluster_tilt(profile.style_cluster)
                                                          : std::vector<double>{};
    for (int k = 0; k < spec.test_per_client; ++k) {
      const int style = spec.mode == PartitionMode::Dirichlet
                            ? static_cast<int>(trng.below(kNumTrainClusters))
                            : sample_style(spec.mode, profile.style_cluster, trng);
      fed.in_domain_test.push_back(
          make_sample(sample_labels(trng, tilt), style, profile, trng.next_u64()));
    }
  }

  // unseen domain: held-out style cluster and transform params outside every
  // training range
  ClientProfile unseen;
  unseen.client_id = -1;
  unseen.blur_sigma = 1.6;
  unseen.contrast_scale = 0.65;
  unseen.brightness_offset = 0.15;
  unseen.style_cluster = kUnseenCluster;
  unseen.sample_count = spec.unseen_test_size;
  Rng urng = root.fork(9999);
  for (int k = 0; k < spec.unseen_test_size; ++k)
    fed.unseen_test.push_back(
        make_sample(sample_labels(urng, {}), kUnseenCluster, unseen, urng.next_u64()));
  return fed;
}

std::vector<Sample> gen_pretrain_corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  ClientProfile neutral;
  neutral.style_cluster = kNeutralCluster;
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    out.push_back(make_sample(sample_labels(rng, {}), kNeutralCluster, neutral, rng.next_u64()));
  return out;
}

namespace {
const char* state_name(DiseaseState s) {
  switch (s) {
    case DiseaseState::POS: return "POS";
    case DiseaseState::NEG: return "NEG";
    case DiseaseState::UNC: return "UNC";
    default: return "BLA";
  }
}

void write_sample(std::ofstream& jsonl, std::ofstream& blob, std::size_t& offset,
                  const Sample& s, int client_id, const char* split) {
  nlohmann::json labels = nlohmann::json::array();
  for (auto st : s.labels) labels.push_back(state_name(st));
  nlohmann::json rec = {{"client_id", client_id},
                        {"split", split},
                        {"style_cluster", s.style_cluster},
                        {"report_tokens", s.report},
                        {"labels", labels},
                        {"image_blob_ref",
                         {{"offset", offset}, {"byte_len", s.image.data.size() * 4}, {"shape", s.image.shape}}}};
  for (double v : s.image.data) {
    const float f = static_cast<float>(v);
    blob.write(reinterpret_cast<const char*>(&f), 4);
  }
  offset += s.image.data.size() * 4;
  jsonl << rec.dump() << "\n";
}
}  // namespace

void export_dataset(const Federation& fed, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream jsonl(dir + "/dataset.jsonl");
  std::ofstream blob(dir + "/images.bin", std::ios::binary);
  if (!jsonl || !blob) throw std::runtime_error("export_dataset: cannot open output files");
  std::size_t offset = 0;
  for (const auto& cd : fed.clients) {
    for (const auto& s : cd.train) write_sample(jsonl, blob, offset, s, cd.profile.client_id, "train");
    for (const auto& s : cd.val) write_sample(jsonl, blob, offset, s, cd.profile.client_id, "val");
  }
  for (const auto& s : fed.in_domain_test) write_sample(jsonl, blob, offset, s, -1, "test_in");
  for (const auto& s : fed.unseen_test) write_sample(jsonl, blob, offset, s, -1, "test_unseen");
}

}  // namespace fedrg
