// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_SYNTHETIC_HPP
#define SPKSIM_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "spksim/config_json.hpp"
#include "spksim/dataset.hpp"
#include "spksim/embedding_space.hpp"
#include "spksim/error.hpp"
#include "spksim/random.hpp"

namespace spksim {

/// Latent similarity as a function of embedding distance:
/// 100 * exp(-d^2 / (2 * scale^2)). Monotone decreasing, bounded in (0, 100].
struct SimilarityCurve {
  double scale = 0.3;
  DistanceMetric metric = DistanceMetric::cosine;

  double operator()(double d) const { return 100.0 * std::exp(-d * d / (2.0 * scale * scale)); }
};

/// Generative model standing in for a real listening-test corpus.
///
/// Speakers are anchors on the unit sphere. Each system has a leakage level;
/// a source utterance is the target anchor rotated towards another speaker by
/// a cosine distance of roughly leakage_strength * level, the reference is the
/// anchor itself, and both get isotropic utterance noise before renormalizing.
/// Listener l scores example e as
///   clip(curve(distance) + bias_l + noise_sd_e * N(0, 1), 0, 100)
/// where noise_sd_e = listener_noise_sd * (1 + h * (2u - 1)) with
/// h = noise_heteroscedasticity and u ~ U(0, 1) per example.
struct SyntheticWorldConfig {
  std::size_t n_speakers = 13;
  std::size_t n_systems = 40;
  std::size_t n_examples = 1000;
  std::size_t n_listeners = 20;
  std::size_t embedding_dim = 16;
  std::size_t n_cycles = 4;
  double leakage_strength = 0.5;
  double utterance_sd = 0.05;
  double listener_bias_sd = 5.0;
  double listener_noise_sd = 15.0;
  double noise_heteroscedasticity = 0.0;
  SimilarityCurve similarity_curve;
  std::uint64_t rng_seed = 1;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw Error(ErrorCode::invalid_config, std::string(name) + " must be >= 1");
    };
    positive(n_speakers, "n_speakers");
    positive(n_systems, "n_systems");
    positive(n_examples, "n_examples");
    positive(n_listeners, "n_listeners");
    positive(n_cycles, "n_cycles");
    if (embedding_dim < 2) throw Error(ErrorCode::invalid_config, "embedding_dim must be >= 2");
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::invalid_config, std::string(name) + " must be a finite value >= 0");
      }
    };
    nonneg(leakage_strength, "leakage_strength");
    nonneg(utterance_sd, "utterance_sd");
    nonneg(listener_bias_sd, "listener_bias_sd");
    nonneg(listener_noise_sd, "listener_noise_sd");
    if (leakage_strength > 2.0) throw Error(ErrorCode::invalid_config, "leakage_strength must be <= 2");
    if (!(noise_heteroscedasticity >= 0.0 && noise_heteroscedasticity <= 1.0)) {
      throw Error(ErrorCode::invalid_config, "noise_heteroscedasticity must be in [0, 1]");
    }
    if (!(similarity_curve.scale > 0.0) || !std::isfinite(similarity_curve.scale)) {
      throw Error(ErrorCode::invalid_config, "similarity_scale must be > 0");
    }
  }
};

inline nlohmann::json to_json(const SyntheticWorldConfig& c) {
  return {
      {"n_speakers", c.n_speakers},
      {"n_systems", c.n_systems},
      {"n_examples", c.n_examples},
      {"n_listeners", c.n_listeners},
      {"embedding_dim", c.embedding_dim},
      {"n_cycles", c.n_cycles},
      {"leakage_strength", c.leakage_strength},
      {"utterance_sd", c.utterance_sd},
      {"listener_bias_sd", c.listener_bias_sd},
      {"listener_noise_sd", c.listener_noise_sd},
      {"noise_heteroscedasticity", c.noise_heteroscedasticity},
      {"similarity_scale", c.similarity_curve.scale},
      {"similarity_metric", std::string(to_string(c.similarity_curve.metric))},
      {"rng_seed", c.rng_seed},
  };
}

inline SyntheticWorldConfig synthetic_config_from_json(const nlohmann::json& j) {
  config::check_keys(j, "synthetic",
                     {"n_speakers", "n_systems", "n_examples", "n_listeners", "embedding_dim", "n_cycles",
                      "leakage_strength", "utterance_sd", "listener_bias_sd", "listener_noise_sd",
                      "noise_heteroscedasticity", "similarity_scale", "similarity_metric", "rng_seed"});
  SyntheticWorldConfig c;
  config::read(j, "n_speakers", c.n_speakers);
  config::read(j, "n_systems", c.n_systems);
  config::read(j, "n_examples", c.n_examples);
  config::read(j, "n_listeners", c.n_listeners);
  config::read(j, "embedding_dim", c.embedding_dim);
  config::read(j, "n_cycles", c.n_cycles);
  config::read(j, "leakage_strength", c.leakage_strength);
  config::read(j, "utterance_sd", c.utterance_sd);
  config::read(j, "listener_bias_sd", c.listener_bias_sd);
  config::read(j, "listener_noise_sd", c.listener_noise_sd);
  config::read(j, "noise_heteroscedasticity", c.noise_heteroscedasticity);
  config::read(j, "similarity_scale", c.similarity_curve.scale);
  std::string metric = std::string(to_string(c.similarity_curve.metric));
  config::read(j, "similarity_metric", metric);
  try {
    c.similarity_curve.metric = parse_distance_metric(metric);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
  config::read(j, "rng_seed", c.rng_seed);
  return c;
}

struct LatentScore {
  std::string example_id;
  double latent_score = 0.0;
};

struct SyntheticDataset {
  EvaluationDataset dataset;
  std::vector<LatentScore> truth;
};

inline std::string latent_truth_jsonl(const std::vector<LatentScore>& truth) {
  std::string out;
  for (const auto& t : truth) {
    nlohmann::ordered_json j;
    j["example_id"] = t.example_id;
    j["latent_score"] = t.latent_score;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<LatentScore> load_latent_truth(const std::string& path) {
  std::vector<LatentScore> out;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::is_blank(lines[i])) continue;
    const auto j = detail::parse_line(path, i + 1, lines[i]);
    try {
      out.push_back({detail::require_string(j, "example_id"), detail::require_number(j, "latent_score")});
    } catch (const Error& e) {
      detail::fail_at(path, i + 1, e);
    }
  }
  return out;
}

namespace detail {

inline std::string numbered(const char* prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline int digits_for(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  while (n < 1e-12) {
    for (double& x : v) x = rng.normal();
    n = l2_norm(v);
  }
  for (double& x : v) x /= n;
  return v;
}

inline void normalize_in_place(std::vector<double>& v) {
  const double n = l2_norm(v);
  for (double& x : v) x /= n;
}

}  // namespace detail

/// Draws a dataset and its pre-noise truth table. A pure function of `config`.
inline SyntheticDataset generate_synthetic(const SyntheticWorldConfig& config) {
  config.validate();
  const std::size_t dim = config.embedding_dim;

  Rng anchor_rng(derive_seed(config.rng_seed, 1));
  std::vector<std::vector<double>> anchors;
  for (std::size_t s = 0; s < config.n_speakers; ++s) anchors.push_back(detail::random_unit(anchor_rng, dim));

  Rng system_rng(derive_seed(config.rng_seed, 2));
  std::vector<double> system_level(config.n_systems);
  for (double& l : system_level) l = system_rng.uniform();

  Rng listener_rng(derive_seed(config.rng_seed, 3));
  std::vector<double> bias(config.n_listeners);
  for (double& b : bias) b = config.listener_bias_sd * listener_rng.normal();

  Rng rng(derive_seed(config.rng_seed, 4));
  SyntheticDataset out;
  const int w_ex = detail::digits_for(config.n_examples - 1);
  const int w_spk = detail::digits_for(config.n_speakers - 1);
  const int w_sys = detail::digits_for(config.n_systems - 1);
  const int w_lis = detail::digits_for(config.n_listeners - 1);
  const int w_cyc = detail::digits_for(config.n_cycles - 1);

  std::vector<EvaluationExample> examples;
  for (std::size_t e = 0; e < config.n_examples; ++e) {
    const std::size_t target = rng.index(config.n_speakers);
    const std::size_t system = rng.index(config.n_systems);
    std::vector<double> toward;
    if (config.n_speakers >= 2) {
      const std::size_t other = (target + 1 + rng.index(config.n_speakers - 1)) % config.n_speakers;
      toward = anchors[other];
    } else {
      toward = detail::random_unit(rng, dim);
    }
    const auto& anchor = anchors[target];
    // Direction of leakage: component of `toward` orthogonal to the anchor.
    double proj = dot(toward, anchor);
    for (std::size_t i = 0; i < dim; ++i) toward[i] -= proj * anchor[i];
    while (l2_norm(toward) < 1e-9) {
      toward = detail::random_unit(rng, dim);
      proj = dot(toward, anchor);
      for (std::size_t i = 0; i < dim; ++i) toward[i] -= proj * anchor[i];
    }
    detail::normalize_in_place(toward);

    const double level = std::clamp(system_level[system] + 0.5 * (rng.uniform() - 0.5), 0.0, 1.0);
    const double angle = std::acos(1.0 - config.leakage_strength * level);
    std::vector<double> source(dim);
    std::vector<double> reference(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      source[i] = std::cos(angle) * anchor[i] + std::sin(angle) * toward[i] + config.utterance_sd * rng.normal();
    }
    for (std::size_t i = 0; i < dim; ++i) reference[i] = anchor[i] + config.utterance_sd * rng.normal();
    detail::normalize_in_place(source);
    detail::normalize_in_place(reference);

    const double d = distance(config.similarity_curve.metric, source, reference);
    const double latent = config.similarity_curve(d);
    const double noise_sd = config.listener_noise_sd *
                            (1.0 + config.noise_heteroscedasticity * (2.0 * rng.uniform() - 1.0));

    EvaluationExample ex;
    ex.example_id = detail::numbered("ex", e, w_ex);
    ex.cycle_id = detail::numbered("cycle", e * config.n_cycles / config.n_examples, w_cyc);
    ex.system_id = detail::numbered("sys", system, w_sys);
    ex.target_speaker_id = detail::numbered("spk", target, w_spk);
    ex.source_embedding_id = ex.example_id + "-src";
    ex.reference_embedding_id = ex.example_id + "-ref";
    for (std::size_t l = 0; l < config.n_listeners; ++l) {
      const double raw = latent + bias[l] + noise_sd * rng.normal();
      ex.scores.push_back({detail::numbered("L", l, w_lis), std::clamp(raw, kMinScore, kMaxScore)});
    }
    out.dataset.add_embedding({ex.source_embedding_id, std::move(source)});
    out.dataset.add_embedding({ex.reference_embedding_id, std::move(reference)});
    out.truth.push_back({ex.example_id, latent});
    examples.push_back(std::move(ex));
  }
  for (auto& ex : examples) out.dataset.add_example(std::move(ex));
  return out;
}

/// Returns a copy of `dataset` where every example carries
/// `pieces_per_utterance` piece pairs, each equal to the utterance embedding
/// plus N(0, piece_jitter_sd^2) per coordinate.
inline EvaluationDataset split_into_pieces(const EvaluationDataset& dataset, double piece_jitter_sd,
                                           std::size_t pieces_per_utterance, std::uint64_t rng_seed) {
  if (dataset.has_pieces()) throw Error(ErrorCode::state, "dataset already has pieces");
  if (pieces_per_utterance < 1) throw Error(ErrorCode::invalid_argument, "pieces_per_utterance must be >= 1");
  if (!(piece_jitter_sd >= 0.0)) throw Error(ErrorCode::invalid_argument, "piece_jitter_sd must be >= 0");
  EvaluationDataset out = dataset;
  for (std::size_t e = 0; e < dataset.examples().size(); ++e) {
    const auto& ex = dataset.examples()[e];
    Rng rng(derive_seed(rng_seed, e));
    std::vector<PiecePair> pieces;
    for (std::size_t p = 0; p < pieces_per_utterance; ++p) {
      PiecePair pair;
      for (bool source : {true, false}) {
        const auto& base = dataset.embedding(source ? ex.source_embedding_id : ex.reference_embedding_id);
        SpeakerEmbedding piece{base.id + "#" + std::to_string(p), base.vector};
        for (double& x : piece.vector) x += piece_jitter_sd * rng.normal();
        (source ? pair.source : pair.reference) = std::move(piece);
      }
      pieces.push_back(std::move(pair));
    }
    out.set_pieces(ex.example_id, std::move(pieces));
  }
  return out;
}

}  // namespace spksim

#endif  // SPKSIM_SYNTHETIC_HPP
