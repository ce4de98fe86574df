// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
#include "fedrg/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedrg/losses.hpp"
#include "fedrg/optim.hpp"

namespace fedrg {

int Vocab::id(const std::string& tok) const {
  auto it = index.find(tok);
  if (it == index.end()) throw std::invalid_argument("Vocab: unknown token '" + tok + "'");
  return it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) {
    if (i < 0 || i >= size()) throw std::out_of_range("Vocab::decode: id out of range");
    out.push_back(tokens[static_cast<std::size_t>(i)]);
  }
  return out;
}

Vocab build_vocab() {
  Vocab v;
  v.tokens = vocabulary();
  const std::vector<std::string> specials = {"[BLA]", "[POS]", "[NEG]", "[UNC]",
                                             "<bos>", "<eos>", "<pad>"};
  v.tokens.insert(v.tokens.end(), specials.begin(), specials.end());
  for (std::size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = static_cast<int>(i);
  v.prompt = {v.id("[BLA]"), v.id("[POS]"), v.id("[NEG]"), v.id("[UNC]")};
  v.bos = v.id("<bos>");
  v.eos = v.id("<eos>");
  v.pad = v.id("<pad>");
  return v;
}

namespace {
constexpr double kInitStd = 0.02;

void add_linear(ParameterSet& ps, const std::string& name, int d_out, int d_in,
                const std::string& partition, Rng& rng, bool trainable = true) {
  ps[name + ".w"] = {Tensor::randn({d_out, d_in}, rng, kInitStd), trainable, partition};
  ps[name + ".b"] = {Tensor::zeros({d_out}), trainable, partition};
}

void add_layernorm(ParameterSet& ps, const std::string& name, int dim,
                   const std::string& partition, Rng& rng, bool trainable = true) {
  (void)rng;
  ps[name + ".g"] = {Tensor::full({dim}, 1.0), trainable, partition};
  ps[name + ".b"] = {Tensor::zeros({dim}), trainable, partition};
}
}  // namespace

void init_encoder_params(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
  const int S = cfg.patches();
  add_linear(ps, "encoder.patch", cfg.channels, cfg.patch * cfg.patch, "encoder", rng);
  for (int l = 0; l < 2; ++l) {
    const std::string p = "encoder.mix" + std::to_string(l);
    add_layernorm(ps, p + ".lnA", cfg.channels, "encoder", rng);
    add_linear(ps, p + ".tok", S, S, "encoder", rng);
    add_layernorm(ps, p + ".lnB", cfg.channels, "encoder", rng);
    add_linear(ps, p + ".ch1", cfg.mix_hidden, cfg.channels, "encoder", rng);
    add_linear(ps, p + ".ch2", cfg.channels, cfg.mix_hidden, "encoder", rng);
  }
  // the mean-pooled feature has entries far below unit scale, so the
  // classifier starts wide (std 2.0) to put the initial logits — and the
  // feature gradients flowing back through W — at a trainable magnitude
  add_linear(ps, "classifier", kNumDiseases * kNumStates, cfg.channels, "classifier", rng);
  for (auto& v : ps.at("classifier.w").value.data) v *= 100.0;
  // zero-init bridge into the frozen decoder: at round 0 the visual prefix
  // matches the (noise-padded, zero-mean) prefix the base was pretrained
  // with, and grows only as far as the report loss pulls it
  add_linear(ps, "projection", cfg.d_model, cfg.channels, "projection", rng);
  for (auto& v : ps.at("projection.w").value.data) v = 0.0;
}

void init_decoder_base(ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab, Rng& rng,
                       bool trainable) {
  if (cfg.d_model % cfg.n_heads != 0)
    throw std::invalid_argument("init_decoder_base: d_model must divide by n_heads");
  ps["base.tok_emb"] = {Tensor::randn({vocab.size(), cfg.d_model}, rng, kInitStd), trainable, "base"};
  ps["base.pos_emb"] = {Tensor::randn({cfg.max_seq, cfg.d_model}, rng, kInitStd), trainable, "base"};
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "base.l" + std::to_string(l);
    add_layernorm(ps, p + ".ln1", cfg.d_model, "base", rng, trainable);
    for (const char* w : {"wq", "wk", "wv", "wo"})
      ps[p + ".attn." + w] = {Tensor::randn({cfg.d_model, cfg.d_model}, rng, kInitStd), trainable,
                              "base"};
    add_layernorm(ps, p + ".ln2", cfg.d_model, "base", rng, trainable);
    add_linear(ps, p + ".ffn.fc1", cfg.ffn_hidden, cfg.d_model, "base", rng, trainable);
    add_linear(ps, p + ".ffn.fc2", cfg.d_model, cfg.ffn_hidden, "base", rng, trainable);
  }
  add_layernorm(ps, "base.lnf", cfg.d_model, "base", rng, trainable);
  add_linear(ps, "base.head", vocab.size(), cfg.d_model, "base", rng, trainable);
}

void set_partition_trainable(ParameterSet& ps, const std::string& partition, bool trainable) {
  for (auto& [name, p] : ps)
    if (p.partition == partition) p.trainable = trainable;
}

namespace {
Tensor image_to_patches(const Tensor& image, const ModelConfig& cfg) {
  if (image.shape.size() != 2 || image.shape[0] != cfg.image_size || image.shape[1] != cfg.image_size)
    throw std::invalid_argument("encode: image shape mismatch, expected " +
                                std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  const int side = cfg.image_size / cfg.patch;
  Tensor out = Tensor::zeros({side * side, cfg.patch * cfg.patch});
  for (int pr = 0; pr < side; ++pr)
    for (int pc = 0; pc < side; ++pc) {
      const int prow = pr * side + pc;
      for (int i = 0; i < cfg.patch; ++i)
        for (int j = 0; j < cfg.patch; ++j)
          out.at(prow, i * cfg.patch + j) = image.at(pr * cfg.patch + i, pc * cfg.patch + j);
    }
  return out;
}
}  // namespace

Tape::NodeId patch_embed(Tape& t, const ParameterSet& ps, const Tensor& image,
                         const ModelConfig& cfg) {
  auto px = t.constant(image_to_patches(image, cfg));
  return t.linear(px, t.param(ps, "encoder.patch.w"), t.param(ps, "encoder.patch.b"));
}

VisualNodes encode(Tape& t, const ParameterSet& ps, const Tensor& image, const ModelConfig& cfg) {
  auto x = patch_embed(t, ps, image, cfg);
  for (int l = 0; l < 2; ++l) {
    const std::string p = "encoder.mix" + std::to_string(l);
    auto h = t.layernorm_rows(x, t.param(ps, p + ".lnA.g"), t.param(ps, p + ".lnA.b"));
    // token mixing across patches
    auto mixed = t.transpose(
        t.linear(t.transpose(h), t.param(ps, p + ".tok.w"), t.param(ps, p + ".tok.b")));
    x = t.add(x, mixed);
    auto h2 = t.layernorm_rows(x, t.param(ps, p + ".lnB.g"), t.param(ps, p + ".lnB.b"));
    auto ch = t.linear(t.gelu(t.linear(h2, t.param(ps, p + ".ch1.w"), t.param(ps, p + ".ch1.b"))),
                       t.param(ps, p + ".ch2.w"), t.param(ps, p + ".ch2.b"));
    x = t.add(x, ch);
  }
  auto pooled_raw = t.mean_rows(x);
  auto pooled = t.l2_normalize_row(pooled_raw);
  return {x, pooled_raw, pooled};
}

Tape::NodeId classify(Tape& t, const ParameterSet& ps, Tape::NodeId pooled) {
  // classification reads the un-normalized pooled feature: the shared
  // background direction is absorbed by the bias, while per-class deltas keep
  // their absolute magnitude (l2 normalization would shrink them by the norm
  // of the dominant common component and stall learning)
  auto logits = t.linear(pooled, t.param(ps, "classifier.w"), t.param(ps, "classifier.b"));
  return t.reshape(logits, {kNumDiseases, kNumStates});
}

std::vector<int> labels_to_prompt(const DiseaseLabelVector& labels, const Vocab& vocab) {
  std::vector<int> out(kNumDiseases);
  for (int d = 0; d < kNumDiseases; ++d)
    out[static_cast<std::size_t>(d)] =
        vocab.prompt[static_cast<std::size_t>(labels[static_cast<std::size_t>(d)])];
  return out;
}

DiseaseLabelVector prompt_to_labels(const std::vector<int>& prompt_ids, const Vocab& vocab) {
  if (prompt_ids.size() != kNumDiseases)
    throw std::invalid_argument("prompt_to_labels: expected 14 prompt tokens");
  DiseaseLabelVector labels{};
  for (int d = 0; d < kNumDiseases; ++d) {
    bool found = false;
    for (int s = 0; s < kNumStates; ++s)
      if (prompt_ids[static_cast<std::size_t>(d)] == vocab.prompt[static_cast<std::size_t>(s)]) {
        labels[static_cast<std::size_t>(d)] = static_cast<DiseaseState>(s);
        found = true;
        break;
      }
    if (!found) throw std::invalid_argument("prompt_to_labels: not a prompt token");
  }
  return labels;
}

namespace {
Tensor causal_mask(int T) {
  Tensor m = Tensor::zeros({T, T});
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j) m.at(i, j) = -1e30;
  return m;
}
}  // namespace

LmOutput forward_lm(Tape& t, const ParameterSet& ps, Tape::NodeId patches,
                    const std::vector<int>& prompt_ids, const std::vector<int>& report_ids,
                    const AdapterMode& mode, const ModelConfig& cfg, const Vocab& vocab,
                    Tape::NodeId text_prefix) {
  if (static_cast<int>(report_ids.size()) > cfg.max_report_len)
    throw std::invalid_argument("forward_lm: report exceeds max_report_len");
  if (prompt_ids.size() != kNumDiseases)
    throw std::invalid_argument("forward_lm: expected 14 prompt tokens");
  const int n = static_cast<int>(report_ids.size());
  const int prefix = patches >= 0  ? t.val(patches).shape[0]
                     : text_prefix >= 0 ? t.val(text_prefix).shape[0]
                                        : 0;
  const int T = prefix + kNumDiseases + 1 + n;
  if (T > cfg.max_seq) throw std::invalid_argument("forward_lm: sequence exceeds max_seq");

  std::vector<int> text_ids = prompt_ids;
  text_ids.push_back(vocab.bos);
  text_ids.insert(text_ids.end(), report_ids.begin(), report_ids.end());
  auto text_emb = t.gather_rows(t.param(ps, "base.tok_emb"), text_ids);

  Tape::NodeId x;
  if (patches >= 0) {
    auto proj = t.linear(patches, t.param(ps, "projection.w"), t.param(ps, "projection.b"));
    x = t.concat_rows({proj, text_emb});
  } else if (text_prefix >= 0) {
    x = t.concat_rows({text_prefix, text_emb});
  } else {
    x = text_emb;
  }
  x = t.add(x, t.slice_rows(t.param(ps, "base.pos_emb"), 0, T));

  auto mask = t.constant(causal_mask(T));
  const int dh = cfg.head_dim();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "base.l" + std::to_string(l);
    const std::string site = "l" + std::to_string(l);
    auto h = t.layernorm_rows(x, t.param(ps, p + ".ln1.g"), t.param(ps, p + ".ln1.b"));
    auto q = apply_site(t, ps, t.param(ps, p + ".attn.wq"), h, site + ".q", mode);
    auto k = t.matmul(h, t.transpose(t.param(ps, p + ".attn.wk")));
    auto v = apply_site(t, ps, t.param(ps, p + ".attn.wv"), h, site + ".v", mode);
    std::vector<Tape::NodeId> heads;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      auto qh = t.slice_cols(q, hd * dh, (hd + 1) * dh);
      auto kh = t.slice_cols(k, hd * dh, (hd + 1) * dh);
      auto vh = t.slice_cols(v, hd * dh, (hd + 1) * dh);
      auto scores = t.add(t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(double(dh))), mask);
      heads.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    auto attn = t.matmul(t.concat_cols(heads), t.transpose(t.param(ps, p + ".attn.wo")));
    x = t.add(x, attn);
    auto h2 = t.layernorm_rows(x, t.param(ps, p + ".ln2.g"), t.param(ps, p + ".ln2.b"));
    auto ff = t.linear(t.gelu(t.linear(h2, t.param(ps, p + ".ffn.fc1.w"), t.param(ps, p + ".ffn.fc1.b"))),
                       t.param(ps, p + ".ffn.fc2.w"), t.param(ps, p + ".ffn.fc2.b"));
    x = t.add(x, ff);
  }
  auto hf = t.layernorm_rows(x, t.param(ps, "base.lnf.g"), t.param(ps, "base.lnf.b"));

  // predictor rows: BOS and every report token; targets: report tokens + EOS
  auto rep_h = t.slice_rows(hf, prefix + kNumDiseases, T);
  auto logits = t.linear(rep_h, t.param(ps, "base.head.w"), t.param(ps, "base.head.b"));

  LmOutput out;
  out.logits = logits;
  out.hidden = rep_h;
  out.targets = report_ids;
  out.targets.push_back(vocab.eos);
  out.mask.resize(out.targets.size());
  for (std::size_t i = 0; i < out.targets.size(); ++i)
    out.mask[i] = out.targets[i] != vocab.pad;
  return out;
}

// --- no-grad path -----------------------------------------------------------

namespace {
void layernorm_vec(std::vector<double>& x, const Tensor& g, const Tensor& b) {
  const int n = static_cast<int>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double istd = 1.0 / std::sqrt(var / n + 1e-5);
  for (int j = 0; j < n; ++j)
    x[static_cast<std::size_t>(j)] = (x[static_cast<std::size_t>(j)] - mean) * istd * g.data[static_cast<std::size_t>(j)] +
                                     b.data[static_cast<std::size_t>(j)];
}

std::vector<double> matvec(const Tensor& w, const double* x) {
  const int m = w.shape[0], n = w.shape[1];
  std::vector<double> y(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = w.data.data() + static_cast<std::size_t>(i) * n;
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += row[j] * x[j];
    y[static_cast<std::size_t>(i)] = s;
  }
  return y;
}

double gelu_scalar(double x) {
  const double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}
}  // namespace

VisualFeatures encode_nograd(const ParameterSet& ps, const Tensor& image, const ModelConfig& cfg) {
  const int S = cfg.patches(), C = cfg.channels;
  Tensor px = image_to_patches(image, cfg);
  Tensor x = Tensor::zeros({S, C});
  const Tensor& pw = ps.at("encoder.patch.w").value;
  const Tensor& pb = ps.at("encoder.patch.b").value;
  for (int s = 0; s < S; ++s) {
    auto y = matvec(pw, px.data.data() + static_cast<std::size_t>(s) * px.cols());
    for (int c = 0; c < C; ++c) x.at(s, c) = y[static_cast<std::size_t>(c)] + pb.data[static_cast<std::size_t>(c)];
  }
  for (int l = 0; l < 2; ++l) {
    const std::string p = "encoder.mix" + std::to_string(l);
    Tensor h = x;
    for (int s = 0; s < S; ++s) {
      std::vector<double> row(h.data.begin() + static_cast<std::ptrdiff_t>(s) * C,
                              h.data.begin() + static_cast<std::ptrdiff_t>(s + 1) * C);
      layernorm_vec(row, ps.at(p + ".lnA.g").value, ps.at(p + ".lnA.b").value);
      for (int c = 0; c < C; ++c) h.at(s, c) = row[static_cast<std::size_t>(c)];
    }
    const Tensor& tw = ps.at(p + ".tok.w").value;
    const Tensor& tb = ps.at(p + ".tok.b").value;
    for (int c = 0; c < C; ++c) {
      std::vector<double> col(static_cast<std::size_t>(S));
      for (int s = 0; s < S; ++s) col[static_cast<std::size_t>(s)] = h.at(s, c);
      auto mixed = matvec(tw, col.data());
      for (int s = 0; s < S; ++s) x.at(s, c) += mixed[static_cast<std::size_t>(s)] + tb.data[static_cast<std::size_t>(s)];
    }
    const Tensor& w1 = ps.at(p + ".ch1.w").value;
    const Tensor& b1 = ps.at(p + ".ch1.b").value;
    const Tensor& w2 = ps.at(p + ".ch2.w").value;
    const Tensor& b2 = ps.at(p + ".ch2.b").value;
    for (int s = 0; s < S; ++s) {
      std::vector<double> row(x.data.begin() + static_cast<std::ptrdiff_t>(s) * C,
                              x.data.begin() + static_cast<std::ptrdiff_t>(s + 1) * C);
      layernorm_vec(row, ps.at(p + ".lnB.g").value, ps.at(p + ".lnB.b").value);
      auto hid = matvec(w1, row.data());
      for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = gelu_scalar(hid[i] + b1.data[i]);
      auto outr = matvec(w2, hid.data());
      for (int c = 0; c < C; ++c) x.at(s, c) += outr[static_cast<std::size_t>(c)] + b2.data[static_cast<std::size_t>(c)];
    }
  }
  VisualFeatures f;
  f.patches = x;
  Tensor pooled = Tensor::zeros({1, C});
  for (int s = 0; s < S; ++s)
    for (int c = 0; c < C; ++c) pooled.data[static_cast<std::size_t>(c)] += x.at(s, c) / S;
  f.pooled_raw = pooled;
  double norm = 0.0;
  for (double v : pooled.data) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    pooled = Tensor::zeros({1, C});
    pooled.data[0] = 1.0;
  } else {
    for (auto& v : pooled.data) v /= norm;
  }
  f.pooled = pooled;
  return f;
}

Tensor classify_nograd(const ParameterSet& ps, const VisualFeatures& feats) {
  auto y = matvec(ps.at("classifier.w").value, feats.pooled_raw.data.data());
  const Tensor& b = ps.at("classifier.b").value;
  Tensor out = Tensor::zeros({kNumDiseases, kNumStates});
  for (std::size_t i = 0; i < y.size(); ++i) out.data[i] = y[i] + b.data[i];
  return out;
}

DiseaseLabelVector argmax_labels(const Tensor& class_logits) {
  DiseaseLabelVector labels{};
  for (int d = 0; d < kNumDiseases; ++d) {
    int best = 0;
    for (int s = 1; s < kNumStates; ++s)
      if (class_logits.at(d, s) > class_logits.at(d, best)) best = s;
    labels[static_cast<std::size_t>(d)] = static_cast<DiseaseState>(best);
  }
  return labels;
}

namespace {
// Incremental decoder state: per-layer key/value rows appended as the
// sequence grows.
struct KvCache {
  std::vector<std::vector<double>> k, v;  // [layer] -> flattened rows of d_model
};

std::vector<double> decoder_step(const ParameterSet& ps, const ModelConfig& cfg,
                                 const AdapterMode& mode, KvCache& cache,
                                 std::vector<double> x /* d_model embedding incl. pos */) {
  const int d = cfg.d_model, dh = cfg.head_dim();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "base.l" + std::to_string(l);
    const std::string site = "l" + std::to_string(l);
    std::vector<double> h = x;
    layernorm_vec(h, ps.at(p + ".ln1.g").value, ps.at(p + ".ln1.b").value);
    auto q = matvec(ps.at(p + ".attn.wq").value, h.data());
    auto k = matvec(ps.at(p + ".attn.wk").value, h.data());
    auto v = matvec(ps.at(p + ".attn.wv").value, h.data());
    if (mode.kind != AdapterMode::Kind::None) {
      auto dq = adapter_delta_nograd(ps, h.data(), d, site + ".q", mode);
      auto dv = adapter_delta_nograd(ps, h.data(), d, site + ".v", mode);
      for (int i = 0; i < d; ++i) {
        q[static_cast<std::size_t>(i)] += dq[static_cast<std::size_t>(i)];
        v[static_cast<std::size_t>(i)] += dv[static_cast<std::size_t>(i)];
      }
    }
    auto& kc = cache.k[static_cast<std::size_t>(l)];
    auto& vc = cache.v[static_cast<std::size_t>(l)];
    kc.insert(kc.end(), k.begin(), k.end());
    vc.insert(vc.end(), v.begin(), v.end());
    const int T = static_cast<int>(kc.size()) / d;
    std::vector<double> attn_out(static_cast<std::size_t>(d), 0.0);
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const int off = hd * dh;
      std::vector<double> scores(static_cast<std::size_t>(T));
      double mx = -1e300;
      for (int tpos = 0; tpos < T; ++tpos) {
        double s = 0.0;
        const double* krow = kc.data() + static_cast<std::size_t>(tpos) * d + off;
        for (int j = 0; j < dh; ++j) s += q[static_cast<std::size_t>(off + j)] * krow[j];
        s /= std::sqrt(double(dh));
        scores[static_cast<std::size_t>(tpos)] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (auto& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (int tpos = 0; tpos < T; ++tpos) {
        const double w = scores[static_cast<std::size_t>(tpos)] / z;
        const double* vrow = vc.data() + static_cast<std::size_t>(tpos) * d + off;
        for (int j = 0; j < dh; ++j) attn_out[static_cast<std::size_t>(off + j)] += w * vrow[j];
      }
    }
    auto proj = matvec(ps.at(p + ".attn.wo").value, attn_out.data());
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];
    std::vector<double> h2 = x;
    layernorm_vec(h2, ps.at(p + ".ln2.g").value, ps.at(p + ".ln2.b").value);
    auto hid = matvec(ps.at(p + ".ffn.fc1.w").value, h2.data());
    const Tensor& b1 = ps.at(p + ".ffn.fc1.b").value;
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = gelu_scalar(hid[i] + b1.data[i]);
    auto ff = matvec(ps.at(p + ".ffn.fc2.w").value, hid.data());
    const Tensor& b2 = ps.at(p + ".ffn.fc2.b").value;
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += ff[static_cast<std::size_t>(i)] + b2.data[static_cast<std::size_t>(i)];
  }
  return x;
}

std::vector<double> embed_token(const ParameterSet& ps, int token, int pos, int d) {
  const Tensor& emb = ps.at("base.tok_emb").value;
  const Tensor& pe = ps.at("base.pos_emb").value;
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = emb.at(token, i) + pe.at(pos, i);
  return x;
}
}  // namespace

std::vector<int> generate(const ParameterSet& ps, const VisualFeatures& feats,
                          const std::vector<int>& prompt_ids, const AdapterMode& mode,
                          const ModelConfig& cfg, const Vocab& vocab, int max_len) {
  const int d = cfg.d_model, S = cfg.patches();
  KvCache cache;
  cache.k.resize(static_cast<std::size_t>(cfg.n_layers));
  cache.v.resize(static_cast<std::size_t>(cfg.n_layers));
  const Tensor& pw = ps.at("projection.w").value;
  const Tensor& pb = ps.at("projection.b").value;
  const Tensor& pe = ps.at("base.pos_emb").value;

  int pos = 0;
  std::vector<double> last;
  for (int s = 0; s < S; ++s) {
    auto x = matvec(pw, feats.patches.data.data() + static_cast<std::size_t>(s) * cfg.channels);
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += pb.data[static_cast<std::size_t>(i)] + pe.at(pos, i);
    last = decoder_step(ps, cfg, mode, cache, std::move(x));
    ++pos;
  }
  for (int id : prompt_ids) {
    last = decoder_step(ps, cfg, mode, cache, embed_token(ps, id, pos, d));
    ++pos;
  }
  last = decoder_step(ps, cfg, mode, cache, embed_token(ps, vocab.bos, pos, d));
  ++pos;

  const Tensor& hw = ps.at("base.head.w").value;
  const Tensor& hb = ps.at("base.head.b").value;
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    std::vector<double> hf = last;
    layernorm_vec(hf, ps.at("base.lnf.g").value, ps.at("base.lnf.b").value);
    auto logits = matvec(hw, hf.data());
    int best = 0;
    for (int v = 1; v < vocab.size(); ++v)
      if (logits[static_cast<std::size_t>(v)] + hb.data[static_cast<std::size_t>(v)] >
          logits[static_cast<std::size_t>(best)] + hb.data[static_cast<std::size_t>(best)])
        best = v;
    if (best == vocab.eos) break;
    out.push_back(best);
    if (pos >= cfg.max_seq) break;
    last = decoder_step(ps, cfg, mode, cache, embed_token(ps, best, pos, d));
    ++pos;
  }
  return out;
}

void pretrain_base(ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab,
                   const std::vector<Sample>& corpus, int steps, int batch, double lr0,
                   std::uint64_t seed) {
  if (corpus.empty()) throw std::invalid_argument("pretrain_base: empty corpus");
  set_partition_trainable(ps, "base", true);
  Rng rng(seed);
  AdamWConfig acfg;
  acfg.lr = lr0;
  acfg.weight_decay = 0.01;
  AdamW opt(acfg);
  // Pretraining is text-only, but downstream the decoder always sees a
  // visual prefix of cfg.patches() rows. A small random placeholder prefix
  // of the same length keeps the prompt and report at their deployment
  // positions and gives the base a robustness margin around the near-zero
  // projected features it meets when fine-tuning starts (an exactly-zero
  // prefix pretrain leaves it brittle against any real feature content).
  for (int step = 0; step < steps; ++step) {
    Tape t;
    Tape::NodeId total = -1;
    for (int b = 0; b < batch; ++b) {
      const Sample& s = corpus[rng.below(corpus.size())];
      auto noise = t.constant(Tensor::randn({cfg.patches(), cfg.d_model}, rng, 0.05));
      auto out = forward_lm(t, ps, -1, labels_to_prompt(s.labels, vocab),
                            vocab.encode(s.report), AdapterMode::none(), cfg, vocab, noise);
      auto loss = lm_loss(t, out.logits, out.targets, out.mask);
      total = total < 0 ? loss : t.add(total, loss);
    }
    auto grads = t.backward(t.scale(total, 1.0 / batch));
    opt.step(ps, grads, cosine_lr(step, steps, lr0));
  }
  set_partition_trainable(ps, "base", false);
}

double avg_lm_loss(const ParameterSet& ps, const ModelConfig& cfg, const Vocab& vocab,
                   const std::vector<Sample>& corpus) {
  double total = 0.0;
  Rng rng(0xabc);  // fixed prefix noise: the measure stays deterministic
  const Tensor noise = Tensor::randn({cfg.patches(), cfg.d_model}, rng, 0.05);
  for (const auto& s : corpus) {
    Tape t;
    auto out = forward_lm(t, ps, -1, labels_to_prompt(s.labels, vocab), vocab.encode(s.report),
                          AdapterMode::none(), cfg, vocab, t.constant(noise));
    total += t.val(lm_loss(t, out.logits, out.targets, out.mask)).data[0];
  }
  return total / static_cast<double>(corpus.size());
}

}  // namespace fedrg
