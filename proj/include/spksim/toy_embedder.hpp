// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_TOY_EMBEDDER_HPP
#define SPKSIM_TOY_EMBEDDER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spksim/adam.hpp"
#include "spksim/config_json.hpp"
#include "spksim/dataset.hpp"
#include "spksim/dense_net.hpp"
#include "spksim/embedding_space.hpp"
#include "spksim/error.hpp"
#include "spksim/random.hpp"
#include "spksim/score_stats.hpp"

namespace spksim {

// ---------------------------------------------------------------------------
// Centroid similarity and its softmax loss
// ---------------------------------------------------------------------------

/// N speakers x M utterances, row-major by speaker: vectors[j * M + i].
struct SpeakerBatch {
  std::size_t n_speakers = 0;
  std::size_t utterances_per_speaker = 0;
  std::vector<std::vector<double>> vectors;

  const std::vector<double>& at(std::size_t j, std::size_t i) const {
    return vectors[j * utterances_per_speaker + i];
  }

  void validate() const {
    if (n_speakers < 2) throw Error(ErrorCode::invalid_argument, "batch needs at least 2 speakers");
    if (utterances_per_speaker < 2) throw Error(ErrorCode::invalid_argument, "batch needs at least 2 utterances per speaker");
    if (vectors.size() != n_speakers * utterances_per_speaker) {
      throw Error(ErrorCode::dimension_mismatch, "batch holds " + std::to_string(vectors.size()) + " vectors, expected " +
                                                     std::to_string(n_speakers * utterances_per_speaker));
    }
    for (const auto& v : vectors) {
      if (v.size() != vectors[0].size() || v.empty()) throw Error(ErrorCode::dimension_mismatch, "ragged batch");
    }
  }
};

struct Ge2eParams {
  double w = 10.0;
  double b = -5.0;

  static constexpr double kMinW = 1e-6;
  void clamp() { w = std::max(w, kMinW); }
};

/// S[j][i][k], flattened as values[(j * M + i) * N + k].
struct SimilarityTensor {
  std::size_t n_speakers = 0;
  std::size_t utterances_per_speaker = 0;
  std::vector<double> values;

  double at(std::size_t j, std::size_t i, std::size_t k) const {
    return values[(j * utterances_per_speaker + i) * n_speakers + k];
  }
  double& at(std::size_t j, std::size_t i, std::size_t k) {
    return values[(j * utterances_per_speaker + i) * n_speakers + k];
  }
};

namespace detail {

struct CentroidCache {
  std::vector<std::vector<double>> sums;  // per speaker
  std::vector<double> cos;                // same layout as SimilarityTensor::values
};

inline std::vector<double> own_centroid_without(const SpeakerBatch& batch, const std::vector<double>& sum,
                                                std::size_t j, std::size_t i) {
  const auto& e = batch.at(j, i);
  const double inv = 1.0 / static_cast<double>(batch.utterances_per_speaker - 1);
  std::vector<double> c(sum.size());
  for (std::size_t d = 0; d < c.size(); ++d) c[d] = (sum[d] - e[d]) * inv;
  return c;
}

inline std::vector<double> mean_centroid(const SpeakerBatch& batch, const std::vector<double>& sum) {
  const double inv = 1.0 / static_cast<double>(batch.utterances_per_speaker);
  std::vector<double> c(sum.size());
  for (std::size_t d = 0; d < c.size(); ++d) c[d] = sum[d] * inv;
  return c;
}

inline double checked_cos(std::span<const double> a, std::span<const double> c, std::size_t j, std::size_t i,
                          std::size_t k) {
  const double na = l2_norm(a);
  const double nc = l2_norm(c);
  if (na == 0.0) throw Error(ErrorCode::invalid_argument, "zero-norm embedding at speaker " + std::to_string(j) +
                                                              ", utterance " + std::to_string(i));
  if (nc == 0.0) throw Error(ErrorCode::invalid_argument, "zero-norm centroid for speaker " + std::to_string(k));
  return dot(a, c) / (na * nc);
}

inline CentroidCache centroid_cosines(const SpeakerBatch& batch) {
  batch.validate();
  const std::size_t n = batch.n_speakers;
  const std::size_t m = batch.utterances_per_speaker;
  const std::size_t dim = batch.vectors[0].size();
  CentroidCache cc;
  cc.sums.assign(n, std::vector<double>(dim, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t d = 0; d < dim; ++d) cc.sums[j][d] += batch.at(j, i)[d];
    }
  }
  std::vector<std::vector<double>> centroids;
  for (std::size_t k = 0; k < n; ++k) centroids.push_back(mean_centroid(batch, cc.sums[k]));
  cc.cos.assign(n * m * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto& e = batch.at(j, i);
      for (std::size_t k = 0; k < n; ++k) {
        const double c = k == j ? checked_cos(e, own_centroid_without(batch, cc.sums[j], j, i), j, i, k)
                                : checked_cos(e, centroids[k], j, i, k);
        cc.cos[(j * m + i) * n + k] = c;
      }
    }
  }
  return cc;
}

}  // namespace detail

/// Scaled cosine similarity of every utterance to every speaker centroid.
/// The own-speaker centroid leaves the utterance itself out.
inline SimilarityTensor ge2e_similarity_matrix(const SpeakerBatch& batch, const Ge2eParams& params) {
  batch.validate();
  for (std::size_t v = 0; v < batch.vectors.size(); ++v) {
    if (std::abs(l2_norm(batch.vectors[v]) - 1.0) > 1e-6) {
      throw Error(ErrorCode::invalid_argument, "embedding " + std::to_string(v) + " is not unit-norm");
    }
  }
  const auto cc = detail::centroid_cosines(batch);
  SimilarityTensor s{batch.n_speakers, batch.utterances_per_speaker, cc.cos};
  for (double& x : s.values) x = params.w * x + params.b;
  return s;
}

namespace detail {

inline double logsumexp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace detail

/// Sum over utterances of -S[j,i,j] + logsumexp_k S[j,i,k].
inline double ge2e_softmax_loss(const SimilarityTensor& s) {
  for (double x : s.values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::non_finite, "similarity tensor has non-finite entries");
  }
  const std::size_t n = s.n_speakers;
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < s.utterances_per_speaker; ++i) {
      std::span<const double> row(&s.values[(j * s.utterances_per_speaker + i) * n], n);
      loss += -row[j] + detail::logsumexp(row);
    }
  }
  return loss;
}

struct Ge2eGradients {
  double loss = 0.0;
  std::vector<std::vector<double>> embeddings;  // same layout as SpeakerBatch::vectors
  double w = 0.0;
  double b = 0.0;
};

/// Softmax loss and its exact gradients. Unit norm is not required here; the
/// gradient is that of the cosine formula at the given vectors.
inline Ge2eGradients ge2e_loss_and_gradients(const SpeakerBatch& batch, const Ge2eParams& params) {
  const auto cc = detail::centroid_cosines(batch);
  const std::size_t n = batch.n_speakers;
  const std::size_t m = batch.utterances_per_speaker;
  const std::size_t dim = batch.vectors[0].size();
  SimilarityTensor s{n, m, cc.cos};
  for (double& x : s.values) x = params.w * x + params.b;

  Ge2eGradients g;
  g.loss = ge2e_softmax_loss(s);
  g.embeddings.assign(n * m, std::vector<double>(dim, 0.0));
  // Gradients with respect to each mean centroid and, per speaker, the
  // leave-one-out centroids (kept per utterance).
  std::vector<std::vector<double>> d_centroid(n, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> d_loo(n * m, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> centroids;
  for (std::size_t k = 0; k < n; ++k) centroids.push_back(detail::mean_centroid(batch, cc.sums[k]));

  std::vector<double> soft(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t row = j * m + i;
      std::span<const double> srow(&s.values[row * n], n);
      const double lse = detail::logsumexp(srow);
      for (std::size_t k = 0; k < n; ++k) soft[k] = std::exp(srow[k] - lse) - (k == j ? 1.0 : 0.0);

      const auto& a = batch.at(j, i);
      const double na = l2_norm(a);
      const auto loo = detail::own_centroid_without(batch, cc.sums[j], j, i);
      for (std::size_t k = 0; k < n; ++k) {
        const double cosv = cc.cos[row * n + k];
        g.w += soft[k] * cosv;
        g.b += soft[k];
        const double gs = soft[k] * params.w;
        const auto& c = k == j ? loo : centroids[k];
        const double nc = l2_norm(c);
        auto& da = g.embeddings[row];
        auto& dc = k == j ? d_loo[row] : d_centroid[k];
        for (std::size_t d = 0; d < dim; ++d) {
          da[d] += gs * (c[d] / (na * nc) - cosv * a[d] / (na * na));
          dc[d] += gs * (a[d] / (na * nc) - cosv * c[d] / (nc * nc));
        }
      }
    }
  }
  // Push centroid gradients back onto the utterances that form them.
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_m1 = 1.0 / static_cast<double>(m - 1);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> loo_total(dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t d = 0; d < dim; ++d) loo_total[d] += d_loo[j * m + i][d];
    }
    for (std::size_t i = 0; i < m; ++i) {
      auto& de = g.embeddings[j * m + i];
      for (std::size_t d = 0; d < dim; ++d) {
        de[d] += d_centroid[j][d] * inv_m + (loo_total[d] - d_loo[j * m + i][d]) * inv_m1;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pairwise same/different classification
// ---------------------------------------------------------------------------

inline constexpr double kProbabilityFloor = 1e-12;

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Binary cross entropy of probability p for label y, with p and 1 - p
/// floored at 1e-12.
inline double pairwise_bce(double p, bool same_speaker) {
  const double q = same_speaker ? p : 1.0 - p;
  return -std::log(std::max(q, kProbabilityFloor));
}

/// Input of the pair head: [|a - b|, a * b] elementwise.
inline std::vector<double> pair_head_input(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  std::vector<double> x(2 * a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    x[d] = std::abs(a[d] - b[d]);
    x[a.size() + d] = a[d] * b[d];
  }
  return x;
}

inline double pairwise_bce_loss(std::span<const double> emb_a, std::span<const double> emb_b, bool same_speaker,
                                const DenseNet& similarity_head) {
  const double logit = similarity_head.predict(pair_head_input(emb_a, emb_b));
  if (!std::isfinite(logit)) throw Error(ErrorCode::non_finite, "non-finite head output");
  return pairwise_bce(logistic(logit), same_speaker);
}

struct PairGradients {
  double loss = 0.0;
  std::vector<double> a;
  std::vector<double> b;
};

/// Loss of one pair; adds head parameter gradients into `head_grads` and
/// returns the gradients for both embeddings.
inline PairGradients pairwise_bce_with_grad(std::span<const double> emb_a, std::span<const double> emb_b,
                                            bool same_speaker, const DenseNet& head, Gradients& head_grads,
                                            double scale = 1.0) {
  const auto x = pair_head_input(emb_a, emb_b);
  const auto cache = head.forward(x, ForwardMode::infer());
  const double logit = cache.scalar();
  const double p = logistic(logit);
  const double q = same_speaker ? p : 1.0 - p;
  PairGradients out;
  out.loss = pairwise_bce(p, same_speaker);
  // d(-log q)/d(logit) = -(1 - q) * sign, zero where the floor is active.
  double dlogit = 0.0;
  if (q > kProbabilityFloor) dlogit = same_speaker ? p - 1.0 : p;
  dlogit *= scale;
  head.accumulate_gradients(cache, std::span<const double>(&dlogit, 1), head_grads);
  const std::size_t dim = emb_a.size();
  out.a.assign(dim, 0.0);
  out.b.assign(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = emb_a[d] - emb_b[d];
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    const double g_abs = head_grads.input[d];
    const double g_prod = head_grads.input[dim + d];
    out.a[d] = g_abs * sgn + g_prod * emb_b[d];
    out.b[d] = -g_abs * sgn + g_prod * emb_a[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection metrics
// ---------------------------------------------------------------------------

/// Equal error rate of a score detector (higher score = same speaker). The
/// threshold sweep takes every observed score; the returned value is the mean
/// of false-accept and false-reject rates where they are closest.
inline double equal_error_rate(std::span<const double> target_scores, std::span<const double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty()) {
    throw Error(ErrorCode::empty_input, "equal error rate needs target and non-target trials");
  }
  std::vector<double> thresholds(target_scores.begin(), target_scores.end());
  thresholds.insert(thresholds.end(), nontarget_scores.begin(), nontarget_scores.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<double> tgt(target_scores.begin(), target_scores.end());
  std::vector<double> non(nontarget_scores.begin(), nontarget_scores.end());
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  // Gaps are compared as integers over the common denominator nt * nn, so
  // ties resolve to the lowest threshold regardless of rounding.
  const auto nt = static_cast<long long>(tgt.size());
  const auto nn = static_cast<long long>(non.size());
  long long best_gap = std::numeric_limits<long long>::max();
  double eer = 1.0;
  for (double t : thresholds) {
    // accept when score >= t
    const long long rejected = std::lower_bound(tgt.begin(), tgt.end(), t) - tgt.begin();
    const long long accepted = non.end() - std::lower_bound(non.begin(), non.end(), t);
    const long long gap = std::llabs(accepted * nt - rejected * nn);
    if (gap < best_gap) {
      best_gap = gap;
      eer = 0.5 * (static_cast<double>(accepted) / static_cast<double>(nn) +
                   static_cast<double>(rejected) / static_cast<double>(nt));
    }
  }
  return eer;
}

struct EmbeddingQuality {
  double within_cos = 0.0;
  double cross_cos = 0.0;
  double eer = 0.0;
};

inline nlohmann::ordered_json to_json(const EmbeddingQuality& q) {
  nlohmann::ordered_json j;
  j["within_cos"] = q.within_cos;
  j["cross_cos"] = q.cross_cos;
  j["eer"] = q.eer;
  return j;
}

/// Cosine statistics over all unordered pairs of distinct vectors.
inline EmbeddingQuality embedding_quality(const std::vector<std::vector<double>>& vectors,
                                          const std::vector<std::size_t>& speaker_of) {
  if (vectors.size() != speaker_of.size()) throw Error(ErrorCode::length_mismatch, "labels do not match vectors");
  std::vector<double> same;
  std::vector<double> diff;
  for (std::size_t a = 0; a < vectors.size(); ++a) {
    for (std::size_t b = a + 1; b < vectors.size(); ++b) {
      const double c = 1.0 - cosine_distance(vectors[a], vectors[b]);
      (speaker_of[a] == speaker_of[b] ? same : diff).push_back(c);
    }
  }
  EmbeddingQuality q;
  q.within_cos = mean_of(same);
  q.cross_cos = mean_of(diff);
  q.eer = equal_error_rate(same, diff);
  return q;
}

// ---------------------------------------------------------------------------
// Synthetic speaker corpus and encoder
// ---------------------------------------------------------------------------

/// Feature vectors drawn around per-speaker means. All speakers share a large
/// common offset, so raw features of different speakers point in nearly the
/// same direction until an encoder learns to remove it.
struct SpeakerCorpusConfig {
  std::size_t n_speakers = 8;
  std::size_t train_utterances = 16;
  std::size_t eval_utterances = 8;
  std::size_t feature_dim = 20;
  double speaker_separation = 1.0;  // sd of speaker means around the offset
  double utterance_spread = 0.15;
  double common_offset = 40.0;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (n_speakers < 4) throw Error(ErrorCode::invalid_config, "corpus needs at least 4 speakers");
    if (train_utterances < 4 || eval_utterances < 4) {
      throw Error(ErrorCode::invalid_config, "corpus needs at least 4 utterances per speaker");
    }
    if (feature_dim < 2) throw Error(ErrorCode::invalid_config, "feature_dim must be >= 2");
    if (!(speaker_separation > 0.0) || !(utterance_spread >= 0.0) || !(common_offset >= 0.0)) {
      throw Error(ErrorCode::invalid_config, "corpus scales must be non-negative (separation > 0)");
    }
  }
};

struct SpeakerCorpus {
  std::vector<std::vector<double>> speaker_means;  // without the common offset
  std::vector<std::vector<std::vector<double>>> train;  // [speaker][utterance]
  std::vector<std::vector<std::vector<double>>> eval;
};

inline SpeakerCorpus make_speaker_corpus(const SpeakerCorpusConfig& cfg) {
  cfg.validate();
  SpeakerCorpus corpus;
  Rng rng(cfg.rng_seed);
  std::vector<double> offset(cfg.feature_dim);
  for (auto& x : offset) x = rng.normal();
  const double on = l2_norm(offset);
  for (auto& x : offset) x *= cfg.common_offset / on;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    std::vector<double> mu(cfg.feature_dim);
    for (auto& x : mu) x = cfg.speaker_separation * rng.normal();
    corpus.speaker_means.push_back(mu);
  }
  auto draw = [&](std::size_t s, std::size_t count) {
    std::vector<std::vector<double>> utts;
    for (std::size_t u = 0; u < count; ++u) {
      std::vector<double> f(cfg.feature_dim);
      for (std::size_t d = 0; d < f.size(); ++d) {
        f[d] = offset[d] + corpus.speaker_means[s][d] + cfg.utterance_spread * rng.normal();
      }
      utts.push_back(std::move(f));
    }
    return utts;
  };
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) corpus.train.push_back(draw(s, cfg.train_utterances));
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) corpus.eval.push_back(draw(s, cfg.eval_utterances));
  return corpus;
}

enum class EmbedderObjective { ge2e, pairwise_bce };

inline std::string_view to_string(EmbedderObjective o) { return o == EmbedderObjective::ge2e ? "ge2e" : "bce"; }

inline EmbedderObjective parse_embedder_objective(std::string_view s) {
  if (s == "ge2e") return EmbedderObjective::ge2e;
  if (s == "bce") return EmbedderObjective::pairwise_bce;
  throw Error(ErrorCode::invalid_argument, "unknown objective '" + std::string(s) + "' (valid: ge2e, bce)");
}

struct EncoderConfig {
  std::size_t hidden = 32;
  std::size_t embedding_dim = 8;
  std::size_t head_hidden = 16;  // pair head, bce only
  std::size_t steps = 300;
  std::size_t utterances_per_batch = 4;  // M per speaker in each step
  double learning_rate = 1e-2;

  void validate() const {
    if (hidden < 1 || embedding_dim < 2 || head_hidden < 1) throw Error(ErrorCode::invalid_config, "bad encoder sizes");
    if (utterances_per_batch < 2) throw Error(ErrorCode::invalid_config, "utterances_per_batch must be >= 2");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_config, "learning_rate must be > 0");
  }
};

inline nlohmann::json to_json(const SpeakerCorpusConfig& c) {
  return {{"n_speakers", c.n_speakers},         {"train_utterances", c.train_utterances},
          {"eval_utterances", c.eval_utterances}, {"feature_dim", c.feature_dim},
          {"speaker_separation", c.speaker_separation}, {"utterance_spread", c.utterance_spread},
          {"common_offset", c.common_offset},   {"rng_seed", c.rng_seed}};
}

inline SpeakerCorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  config::check_keys(j, "corpus", {"n_speakers", "train_utterances", "eval_utterances", "feature_dim",
                                   "speaker_separation", "utterance_spread", "common_offset", "rng_seed"});
  SpeakerCorpusConfig c;
  config::read(j, "n_speakers", c.n_speakers);
  config::read(j, "train_utterances", c.train_utterances);
  config::read(j, "eval_utterances", c.eval_utterances);
  config::read(j, "feature_dim", c.feature_dim);
  config::read(j, "speaker_separation", c.speaker_separation);
  config::read(j, "utterance_spread", c.utterance_spread);
  config::read(j, "common_offset", c.common_offset);
  config::read(j, "rng_seed", c.rng_seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"hidden", c.hidden}, {"embedding_dim", c.embedding_dim}, {"head_hidden", c.head_hidden},
          {"steps", c.steps}, {"utterances_per_batch", c.utterances_per_batch}, {"learning_rate", c.learning_rate}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  config::check_keys(j, "encoder",
                     {"hidden", "embedding_dim", "head_hidden", "steps", "utterances_per_batch", "learning_rate"});
  EncoderConfig c;
  config::read(j, "hidden", c.hidden);
  config::read(j, "embedding_dim", c.embedding_dim);
  config::read(j, "head_hidden", c.head_hidden);
  config::read(j, "steps", c.steps);
  config::read(j, "utterances_per_batch", c.utterances_per_batch);
  config::read(j, "learning_rate", c.learning_rate);
  c.validate();
  return c;
}

/// Two dense layers followed by projection onto the unit sphere.
struct Encoder {
  DenseNet net;

  struct Output {
    ForwardCache cache;
    std::vector<double> embedding;
    double norm = 0.0;
  };

  Output forward(std::span<const double> features) const {
    Output o;
    o.cache = net.forward(features, ForwardMode::infer());
    o.norm = l2_norm(o.cache.output);
    if (o.norm == 0.0) throw Error(ErrorCode::non_finite, "encoder produced a zero vector");
    o.embedding = o.cache.output;
    for (double& x : o.embedding) x /= o.norm;
    return o;
  }

  std::vector<double> embed(std::span<const double> features) const { return forward(features).embedding; }

  /// Backpropagates d(loss)/d(embedding) through the normalization and the
  /// network, adding parameter gradients into `grads`.
  void backward(const Output& o, std::span<const double> d_embedding, Gradients& grads) const {
    const double proj = dot(o.embedding, d_embedding);
    std::vector<double> dz(d_embedding.size());
    for (std::size_t d = 0; d < dz.size(); ++d) dz[d] = (d_embedding[d] - o.embedding[d] * proj) / o.norm;
    net.accumulate_gradients(o.cache, dz, grads);
  }
};

struct ToyEmbedderResult {
  EmbedderObjective objective = EmbedderObjective::ge2e;
  Encoder encoder;
  Ge2eParams ge2e;
  EmbeddingQuality untrained;
  EmbeddingQuality trained;
  std::vector<double> loss_curve;
  std::vector<SpeakerEmbedding> embeddings;  // eval utterances, "spkS-uttU"
};

inline nlohmann::ordered_json quality_report(const ToyEmbedderResult& r) {
  nlohmann::ordered_json j;
  j["objective"] = std::string(to_string(r.objective));
  const auto trained = to_json(r.trained);
  for (const auto& [k, v] : trained.items()) j[k] = v;
  j["untrained"] = to_json(r.untrained);
  j["final_loss"] = r.loss_curve.empty() ? 0.0 : r.loss_curve.back();
  if (r.objective == EmbedderObjective::ge2e) {
    j["w"] = r.ge2e.w;
    j["b"] = r.ge2e.b;
  }
  return j;
}

inline std::string toy_embedding_id(std::size_t speaker, std::size_t utterance) {
  return "spk" + std::to_string(speaker) + "-utt" + std::to_string(utterance);
}

/// Trains the encoder on the corpus' train utterances and reports quality on
/// its eval utterances. Each step draws utterances_per_batch utterances from
/// every speaker. Exported embeddings are the normalized encoder outputs; the
/// pair head is not part of them.
inline ToyEmbedderResult train_toy_embedder(EmbedderObjective objective, const SpeakerCorpusConfig& corpus_cfg,
                                            const EncoderConfig& enc_cfg, std::uint64_t seed) {
  corpus_cfg.validate();
  enc_cfg.validate();
  if (enc_cfg.utterances_per_batch > corpus_cfg.train_utterances) {
    throw Error(ErrorCode::invalid_config, "utterances_per_batch exceeds train utterances per speaker");
  }
  const auto corpus = make_speaker_corpus(corpus_cfg);
  const std::size_t n = corpus_cfg.n_speakers;
  const std::size_t m = enc_cfg.utterances_per_batch;

  ToyEmbedderResult result;
  result.objective = objective;
  const std::size_t enc_dims[] = {corpus_cfg.feature_dim, enc_cfg.hidden, enc_cfg.embedding_dim};
  result.encoder.net = DenseNet::build(enc_dims, Activation::leaky_relu(0.01), Activation::identity(), 0.0,
                                       derive_seed(seed, 1));
  const std::size_t head_dims[] = {2 * enc_cfg.embedding_dim, enc_cfg.head_hidden, 1};
  DenseNet head = DenseNet::build(head_dims, Activation::leaky_relu(0.0), Activation::identity(), 0.0,
                                  derive_seed(seed, 2));

  auto evaluate = [&]() {
    std::vector<std::vector<double>> vecs;
    std::vector<std::size_t> labels;
    for (std::size_t s = 0; s < n; ++s) {
      for (const auto& f : corpus.eval[s]) {
        vecs.push_back(result.encoder.embed(f));
        labels.push_back(s);
      }
    }
    return embedding_quality(vecs, labels);
  };
  result.untrained = evaluate();

  Ge2eParams& params = result.ge2e;
  AdamState enc_adam;
  AdamState head_adam;
  AdamState sim_adam;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = enc_cfg.learning_rate;
  Rng rng(derive_seed(seed, 3));
  std::vector<std::size_t> order(corpus_cfg.train_utterances);

  for (std::size_t step = 0; step < enc_cfg.steps; ++step) {
    std::vector<Encoder::Output> outs;
    SpeakerBatch batch{n, m, {}};
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t u = 0; u < order.size(); ++u) order[u] = u;
      rng.shuffle(order);
      for (std::size_t i = 0; i < m; ++i) {
        outs.push_back(result.encoder.forward(corpus.train[s][order[i]]));
        batch.vectors.push_back(outs.back().embedding);
      }
    }
    Gradients enc_grads = result.encoder.net.zero_gradients();
    std::vector<std::vector<double>> d_emb;
    double loss = 0.0;
    if (objective == EmbedderObjective::ge2e) {
      auto g = ge2e_loss_and_gradients(batch, params);
      loss = g.loss;
      d_emb = std::move(g.embeddings);
      double w = params.w;
      double b = params.b;
      const double gw[1] = {g.w};
      const double gb[1] = {g.b};
      ParamBlock blocks[] = {{"ge2e.w", std::span<double>(&w, 1), gw}, {"ge2e.b", std::span<double>(&b, 1), gb}};
      adam_step(blocks, sim_adam, adam_cfg);
      params.w = w;
      params.b = b;
      params.clamp();
    } else {
      // Every ordered pair in the batch, positives and negatives weighted to
      // contribute equally.
      d_emb.assign(n * m, std::vector<double>(enc_cfg.embedding_dim, 0.0));
      Gradients head_grads = head.zero_gradients();
      const double n_pos = static_cast<double>(n * m * (m - 1) / 2);
      const double n_neg = static_cast<double>(n * m * (n - 1) * m / 2);
      for (std::size_t a = 0; a < n * m; ++a) {
        for (std::size_t b = a + 1; b < n * m; ++b) {
          const bool same = a / m == b / m;
          const double scale = 0.5 / (same ? n_pos : n_neg);
          auto pg = pairwise_bce_with_grad(batch.vectors[a], batch.vectors[b], same, head, head_grads, scale);
          loss += scale * pg.loss;
          for (std::size_t d = 0; d < pg.a.size(); ++d) {
            d_emb[a][d] += pg.a[d];
            d_emb[b][d] += pg.b[d];
          }
        }
      }
      auto hb = param_blocks(head, head_grads);
      adam_step(hb, head_adam, adam_cfg);
    }
    for (std::size_t v = 0; v < outs.size(); ++v) result.encoder.backward(outs[v], d_emb[v], enc_grads);
    auto eb = param_blocks(result.encoder.net, enc_grads);
    adam_step(eb, enc_adam, adam_cfg);
    result.loss_curve.push_back(loss);
  }

  result.trained = evaluate();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t u = 0; u < corpus.eval[s].size(); ++u) {
      result.embeddings.push_back({toy_embedding_id(s, u), result.encoder.embed(corpus.eval[s][u])});
    }
  }
  return result;
}

/// Evaluation examples over the exported embeddings so that the baseline
/// can run on them. Each example pairs a source and a reference utterance;
/// listeners score the cosine distance between the two speakers' latent
/// means through a Gaussian curve, plus small listener noise.
inline EvaluationDataset toy_evaluation_dataset(const ToyEmbedderResult& r, const SpeakerCorpusConfig& corpus_cfg,
                                                std::size_t n_examples, std::uint64_t seed) {
  const auto corpus = make_speaker_corpus(corpus_cfg);
  EvaluationDataset ds;
  for (const auto& e : r.embeddings) ds.add_embedding(e);
  Rng rng(seed);
  const std::size_t n = corpus_cfg.n_speakers;
  const std::size_t u = corpus_cfg.eval_utterances;
  for (std::size_t k = 0; k < n_examples; ++k) {
    const std::size_t ref = rng.index(n);
    const std::size_t src = rng.bernoulli(0.3) ? ref : rng.index(n);
    const double d = cosine_distance(corpus.speaker_means[src], corpus.speaker_means[ref]);
    const double latent = 100.0 * std::exp(-d * d / (2.0 * 0.5 * 0.5));
    EvaluationExample ex;
    ex.example_id = "toy" + std::to_string(k);
    ex.cycle_id = "toy";
    ex.system_id = "spk" + std::to_string(src);
    ex.target_speaker_id = "spk" + std::to_string(ref);
    ex.source_embedding_id = toy_embedding_id(src, rng.index(u));
    ex.reference_embedding_id = toy_embedding_id(ref, rng.index(u));
    for (std::size_t l = 0; l < 5; ++l) {
      ex.scores.push_back({"L" + std::to_string(l), std::clamp(latent + 3.0 * rng.normal(), kMinScore, kMaxScore)});
    }
    ds.add_example(ex);
  }
  return ds;
}

}  // namespace spksim

#endif  // SPKSIM_TOY_EMBEDDER_HPP
