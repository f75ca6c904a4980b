// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_TRAINER_HPP
#define SPKSIM_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "spksim/adam.hpp"
#include "spksim/config_json.hpp"
#include "spksim/dataset.hpp"
#include "spksim/dense_net.hpp"
#include "spksim/error.hpp"
#include "spksim/losses.hpp"
#include "spksim/random.hpp"
#include "spksim/score_stats.hpp"

namespace spksim {

/// Which pair features feed the regressor. Default: [src, ref, |src - ref|].
struct FeatureConfig {
  bool concat = true;
  bool abs_diff = true;
  bool product = false;

  std::size_t dim(std::size_t embedding_dim) const {
    return embedding_dim * ((concat ? 2 : 0) + (abs_diff ? 1 : 0) + (product ? 1 : 0));
  }

  bool operator==(const FeatureConfig&) const = default;
};

inline std::vector<double> pair_features(std::span<const double> src, std::span<const double> ref,
                                         const FeatureConfig& cfg) {
  if (src.size() != ref.size()) throw Error(ErrorCode::dimension_mismatch, "source and reference dimensions differ");
  std::vector<double> f;
  f.reserve(cfg.dim(src.size()));
  if (cfg.concat) {
    f.insert(f.end(), src.begin(), src.end());
    f.insert(f.end(), ref.begin(), ref.end());
  }
  if (cfg.abs_diff) {
    for (std::size_t i = 0; i < src.size(); ++i) f.push_back(std::abs(src[i] - ref[i]));
  }
  if (cfg.product) {
    for (std::size_t i = 0; i < src.size(); ++i) f.push_back(src[i] * ref[i]);
  }
  return f;
}

struct NetConfig {
  std::size_t hidden = 128;
  double leaky_slope = 0.01;
  double dropout = 0.2;
  FeatureConfig features;

  void validate() const {
    if (hidden < 1) throw Error(ErrorCode::invalid_config, "hidden must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::invalid_config, "dropout must be in [0, 1)");
    if (!features.concat && !features.abs_diff && !features.product) {
      throw Error(ErrorCode::invalid_config, "at least one feature group must be enabled");
    }
  }
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  AdamConfig adam;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorCode::invalid_config, "batch_size must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw Error(ErrorCode::invalid_config, "validation_fraction must be in [0, 1)");
    }
    if (!(adam.learning_rate > 0.0)) throw Error(ErrorCode::invalid_config, "learning_rate must be > 0");
  }
};

inline nlohmann::json to_json(const NetConfig& c) {
  std::vector<std::string> feats;
  if (c.features.concat) feats.emplace_back("concat");
  if (c.features.abs_diff) feats.emplace_back("abs_diff");
  if (c.features.product) feats.emplace_back("product");
  return {{"hidden", c.hidden}, {"leaky_slope", c.leaky_slope}, {"dropout", c.dropout}, {"features", feats}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
  config::check_keys(j, "net", {"hidden", "leaky_slope", "dropout", "features"});
  NetConfig c;
  config::read(j, "hidden", c.hidden);
  config::read(j, "leaky_slope", c.leaky_slope);
  config::read(j, "dropout", c.dropout);
  if (j.contains("features")) {
    std::vector<std::string> feats;
    config::read(j, "features", feats);
    c.features = {false, false, false};
    for (const auto& f : feats) {
      if (f == "concat") c.features.concat = true;
      else if (f == "abs_diff") c.features.abs_diff = true;
      else if (f == "product") c.features.product = true;
      else throw Error(ErrorCode::invalid_config, "unknown feature group '" + f + "' (valid: concat, abs_diff, product)");
    }
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"validation_fraction", c.validation_fraction},
          {"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  config::check_keys(j, "train", {"epochs", "batch_size", "patience", "validation_fraction", "learning_rate",
                                  "beta1", "beta2", "adam_epsilon"});
  TrainConfig c;
  config::read(j, "epochs", c.epochs);
  config::read(j, "batch_size", c.batch_size);
  config::read(j, "patience", c.patience);
  config::read(j, "validation_fraction", c.validation_fraction);
  config::read(j, "learning_rate", c.adam.learning_rate);
  config::read(j, "beta1", c.adam.beta1);
  config::read(j, "beta2", c.adam.beta2);
  config::read(j, "adam_epsilon", c.adam.epsilon);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Training units
// ---------------------------------------------------------------------------

/// One regression sample: an utterance pair, or one piece pair of it.
struct TrainingUnit {
  std::string id;
  std::string parent_id;
  std::vector<double> features;
  std::size_t dist_index = 0;  // into UnitSet::dists
};

/// Units plus the score distributions of their parent examples. Pieces
/// point at the distribution of the utterance they were cut from.
struct UnitSet {
  std::vector<TrainingUnit> units;
  std::vector<ScoreDistribution> dists;

  const ScoreDistribution& dist_of(const TrainingUnit& u) const { return dists[u.dist_index]; }
};

inline UnitSet utterance_units(const EvaluationDataset& ds, const FeatureConfig& features) {
  UnitSet set;
  for (const auto& ex : ds.examples()) {
    set.dists.push_back(distribution_of(ex));
    TrainingUnit u;
    u.id = ex.example_id;
    u.parent_id = ex.example_id;
    u.features = pair_features(ds.embedding(ex.source_embedding_id).vector,
                               ds.embedding(ex.reference_embedding_id).vector, features);
    u.dist_index = set.dists.size() - 1;
    set.units.push_back(std::move(u));
  }
  return set;
}

inline std::string piece_unit_id(const std::string& example_id, std::size_t index) {
  return example_id + "#" + std::to_string(index);
}

inline UnitSet piece_units(const EvaluationDataset& ds, const FeatureConfig& features) {
  if (!ds.has_pieces()) throw Error(ErrorCode::state, "dataset has no pieces");
  UnitSet set;
  for (const auto& ex : ds.examples()) {
    auto it = ds.pieces().find(ex.example_id);
    if (it == ds.pieces().end()) {
      throw Error(ErrorCode::state, "example '" + ex.example_id + "' has no pieces");
    }
    set.dists.push_back(distribution_of(ex));
    for (std::size_t p = 0; p < it->second.size(); ++p) {
      TrainingUnit u;
      u.id = piece_unit_id(ex.example_id, p);
      u.parent_id = ex.example_id;
      u.features = pair_features(it->second[p].source.vector, it->second[p].reference.vector, features);
      u.dist_index = set.dists.size() - 1;
      set.units.push_back(std::move(u));
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Per-feature affine standardization fitted on training units only.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const UnitSet& set, std::span<const std::size_t> idx) {
    Standardizer s;
    const std::size_t dim = set.units[idx[0]].features.size();
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    std::vector<double> column(idx.size());
    for (std::size_t c = 0; c < dim; ++c) {
      for (std::size_t i = 0; i < idx.size(); ++i) column[i] = set.units[idx[i]].features[c];
      s.mean[c] = mean_of(column);
      const double sd = population_sd(column, s.mean[c]);
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != mean.size()) {
      throw Error(ErrorCode::dimension_mismatch, "feature dimension " + std::to_string(x.size()) +
                                                     " does not match model (" + std::to_string(mean.size()) + ")");
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
    return out;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Trained regressor. The network works in standardized units; predictions
/// in score units are target_offset + target_scale * net output, unclamped.
struct RegressionModel {
  DenseNet net;
  NetConfig net_config;
  TrainConfig train_config;
  LossSpec loss;
  Standardizer scaler;
  double target_offset = 0.0;
  double target_scale = 1.0;
  AdamState optimizer;
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  std::uint64_t seed = 0;
  std::string dataset_fingerprint;

  double raw_output(std::span<const double> features) const {
    return target_offset + target_scale * net.predict(scaler.apply(features));
  }

  double raw_predict(std::span<const double> source, std::span<const double> reference) const {
    return raw_output(pair_features(source, reference, net_config.features));
  }
};

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json checkpoint_to_json(const RegressionModel& m) {
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  const auto net = network_to_json(m.net);
  for (const auto& [k, v] : net.items()) j[k] = v;
  j["optimizer_state"] = to_json(m.optimizer);
  nlohmann::ordered_json tc;
  tc["net"] = to_json(m.net_config);
  tc["train"] = to_json(m.train_config);
  tc["loss"] = to_json(m.loss);
  tc["seed"] = m.seed;
  tc["best_epoch"] = m.best_epoch;
  tc["feature_mean"] = m.scaler.mean;
  tc["feature_scale"] = m.scaler.scale;
  tc["target_offset"] = m.target_offset;
  tc["target_scale"] = m.target_scale;
  j["training_config"] = tc;
  j["dataset_fingerprint"] = m.dataset_fingerprint;
  return j;
}

inline RegressionModel checkpoint_from_json(const nlohmann::json& j) {
  RegressionModel m;
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::schema, "unsupported checkpoint version");
    }
    m.net = network_from_json(j);
    m.optimizer = adam_state_from_json(j.at("optimizer_state"));
    const auto& tc = j.at("training_config");
    m.net_config = net_config_from_json(tc.at("net"));
    m.train_config = train_config_from_json(tc.at("train"));
    m.loss = loss_spec_from_json(tc.at("loss"));
    m.seed = tc.at("seed").get<std::uint64_t>();
    m.best_epoch = tc.at("best_epoch").get<std::size_t>();
    m.scaler.mean = tc.at("feature_mean").get<std::vector<double>>();
    m.scaler.scale = tc.at("feature_scale").get<std::vector<double>>();
    m.target_offset = tc.at("target_offset").get<double>();
    m.target_scale = tc.at("target_scale").get<double>();
    m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, std::string("malformed checkpoint: ") + e.what());
  }
  if (m.scaler.mean.size() != m.net.input_dim() || m.scaler.scale.size() != m.net.input_dim()) {
    throw Error(ErrorCode::schema, "checkpoint normalization does not match network input");
  }
  return m;
}

inline std::string training_curve_csv(const std::vector<EpochRecord>& curve) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& r : curve) {
    out += std::to_string(r.epoch) + ",";
    out += nlohmann::json(r.train_loss).dump() + ",";
    out += std::isfinite(r.val_loss) ? nlohmann::json(r.val_loss).dump() : std::string();
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

struct TrainItem {
  std::size_t unit = 0;
  double target = 0.0;  // mean, or one listener's score for the single variant
  double weight = 1.0;
};

inline LossValue item_loss(const LossSpec& loss, double pred, const TrainItem& item, const ScoreDistribution& dist) {
  switch (loss.kind) {
    case LossKind::mse: return mse_with_grad(pred, item.target);
    case LossKind::weighted_mse: return mse_with_grad(pred, item.target, item.weight);
    case LossKind::mahalanobis: return mahalanobis_with_grad(pred, dist, loss.epsilon_sd);
    case LossKind::mahalanobis_single:
      return mahalanobis_single_with_grad(pred, item.target, dist, loss.epsilon_sd);
  }
  return {};
}

inline std::vector<TrainItem> make_items(const UnitSet& set, std::span<const std::size_t> idx, const LossSpec& loss) {
  std::vector<TrainItem> items;
  std::vector<double> weights;
  if (loss.kind == LossKind::weighted_mse) {
    std::vector<double> means;
    for (auto i : idx) means.push_back(set.dist_of(set.units[i]).mean);
    weights = density_weights(means, loss.weight_bin_width, loss.weight_epsilon);
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& dist = set.dist_of(set.units[idx[k]]);
    if (loss.kind == LossKind::mahalanobis_single) {
      for (double s : dist.raw) items.push_back({idx[k], s, 1.0});
    } else {
      items.push_back({idx[k], dist.mean, weights.empty() ? 1.0 : weights[k]});
    }
  }
  return items;
}

}  // namespace detail

/// Fits the two-layer regressor on `train_idx` (indices into `set`).
///
/// A validation subset of whole parents (validation_fraction, at least one,
/// only when there are 10+ parents) is held out for early stopping; the
/// returned network is the one with the lowest validation loss. Feature and
/// target normalization, density weights and the validation split all come
/// from the training indices alone. Deterministic in `seed`.
inline RegressionModel fit_regressor(const UnitSet& set, std::span<const std::size_t> train_idx, const LossSpec& loss,
                                     const NetConfig& net_cfg, const TrainConfig& train_cfg, std::uint64_t seed) {
  if (train_idx.empty()) throw Error(ErrorCode::empty_input, "empty training set");
  loss.validate();
  net_cfg.validate();
  train_cfg.validate();

  // Validation split by parent so that sibling pieces never straddle it.
  std::vector<std::string> parents;
  std::set<std::string> seen;
  for (auto i : train_idx) {
    if (seen.insert(set.units[i].parent_id).second) parents.push_back(set.units[i].parent_id);
  }
  std::set<std::string> val_parents;
  if (train_cfg.validation_fraction > 0.0 && parents.size() >= 10) {
    Rng rng(derive_seed(seed, 11));
    rng.shuffle(parents);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(train_cfg.validation_fraction * static_cast<double>(parents.size()))));
    val_parents.insert(parents.begin(), parents.begin() + static_cast<std::ptrdiff_t>(n_val));
  }
  std::vector<std::size_t> fit_idx;
  std::vector<std::size_t> val_idx;
  for (auto i : train_idx) (val_parents.count(set.units[i].parent_id) ? val_idx : fit_idx).push_back(i);

  RegressionModel model;
  model.net_config = net_cfg;
  model.train_config = train_cfg;
  model.loss = loss;
  model.seed = seed;
  model.scaler = Standardizer::fit(set, fit_idx);
  {
    std::vector<double> means;
    for (auto i : fit_idx) means.push_back(set.dist_of(set.units[i]).mean);
    model.target_offset = mean_of(means);
    const double sd = population_sd(means, model.target_offset);
    model.target_scale = sd > 1e-6 ? sd : 1.0;
  }

  std::unordered_map<std::size_t, std::vector<double>> inputs;
  for (auto i : train_idx) inputs.emplace(i, model.scaler.apply(set.units[i].features));

  const std::size_t in_dim = set.units[train_idx[0]].features.size();
  const std::size_t dims[] = {in_dim, net_cfg.hidden, 1};
  DenseNet net = DenseNet::build(dims, Activation::leaky_relu(net_cfg.leaky_slope), Activation::identity(),
                                 net_cfg.dropout, derive_seed(seed, 1));

  auto items = detail::make_items(set, fit_idx, loss);
  const auto val_items = detail::make_items(set, val_idx, loss);

  auto evaluate = [&](const DenseNet& n, const std::vector<detail::TrainItem>& its) {
    double total = 0.0;
    for (const auto& it : its) {
      const double pred = model.target_offset + model.target_scale * n.predict(inputs.at(it.unit));
      total += detail::item_loss(loss, pred, it, set.dist_of(set.units[it.unit])).value;
    }
    return total / static_cast<double>(its.size());
  };

  Gradients grads = net.zero_gradients();
  AdamState adam;
  DenseNet best = net;
  AdamState best_adam;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::uint64_t draw = 0;
  const std::uint64_t dropout_stream = derive_seed(seed, 3);

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(derive_seed(seed, 2), epoch));
    order_rng.shuffle(items);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < items.size(); start += train_cfg.batch_size) {
      const std::size_t end = std::min(items.size(), start + train_cfg.batch_size);
      for (auto& l : grads.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
      }
      for (std::size_t k = start; k < end; ++k) {
        const auto& it = items[k];
        const auto& unit = set.units[it.unit];
        const auto cache = net.forward(inputs.at(it.unit), ForwardMode::train(derive_seed(dropout_stream, draw++)));
        const double pred = model.target_offset + model.target_scale * cache.scalar();
        const auto lv = detail::item_loss(loss, pred, it, set.dist_of(unit));
        if (!std::isfinite(lv.value)) {
          throw Error(ErrorCode::non_finite, "non-finite loss on example '" + unit.id + "'");
        }
        epoch_loss += lv.value;
        const double upstream = lv.grad * model.target_scale;
        net.accumulate_gradients(cache, std::span<const double>(&upstream, 1), grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      auto blocks = param_blocks(net, grads);
      adam_step(blocks, adam, train_cfg.adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(items.size());
    if (!val_items.empty()) {
      rec.val_loss = evaluate(net, val_items);
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        best = net;
        best_adam = adam;
        best_epoch = epoch;
      }
    }
    model.curve.push_back(rec);
    if (!val_items.empty() && epoch - best_epoch >= train_cfg.patience) break;
  }
  if (!val_items.empty() && best_epoch > 0) {
    model.net = std::move(best);
    model.optimizer = std::move(best_adam);
    model.best_epoch = best_epoch;
  } else {
    model.net = std::move(net);
    model.optimizer = std::move(adam);
    model.best_epoch = model.curve.empty() ? 0 : model.curve.back().epoch;
  }
  return model;
}

inline std::vector<std::size_t> indices_of(const UnitSet& set, std::span<const std::string> parent_ids) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_parent;
  for (std::size_t i = 0; i < set.units.size(); ++i) by_parent[set.units[i].parent_id].push_back(i);
  std::vector<std::size_t> idx;
  std::set<std::string> seen;
  for (const auto& id : parent_ids) {
    auto it = by_parent.find(id);
    if (it == by_parent.end()) throw Error(ErrorCode::unknown_id, "unknown example id '" + id + "'");
    if (!seen.insert(id).second) continue;
    idx.insert(idx.end(), it->second.begin(), it->second.end());
  }
  return idx;
}

/// Trains on whole utterances of the examples in `train_ids`.
inline RegressionModel train(const EvaluationDataset& ds, std::span<const std::string> train_ids, const LossSpec& loss,
                             const NetConfig& net_cfg, const TrainConfig& train_cfg, std::uint64_t seed) {
  const auto set = utterance_units(ds, net_cfg.features);
  const auto idx = indices_of(set, train_ids);
  auto model = fit_regressor(set, idx, loss, net_cfg, train_cfg, seed);
  model.dataset_fingerprint = dataset_fingerprint(ds);
  return model;
}

/// Trains on every piece of the examples in `train_ids`.
inline RegressionModel train_pieces(const EvaluationDataset& ds, std::span<const std::string> train_ids,
                                    const LossSpec& loss, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                                    std::uint64_t seed) {
  const auto set = piece_units(ds, net_cfg.features);
  const auto idx = indices_of(set, train_ids);
  auto model = fit_regressor(set, idx, loss, net_cfg, train_cfg, seed);
  model.dataset_fingerprint = dataset_fingerprint(ds);
  return model;
}

struct Prediction {
  std::string example_id;
  double value = 0.0;  // clamped to [0, 100]
  double raw = 0.0;
};

inline double clamp_score(double x) { return std::clamp(x, kMinScore, kMaxScore); }

/// Inference-mode predictions for `ids`, in the given order.
inline std::vector<Prediction> predict(const RegressionModel& model, const EvaluationDataset& ds,
                                       std::span<const std::string> ids) {
  std::vector<Prediction> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& ex = ds.example(id);
    const auto& src = ds.embedding(ex.source_embedding_id).vector;
    const auto& ref = ds.embedding(ex.reference_embedding_id).vector;
    if (model.net_config.features.dim(src.size()) != model.net.input_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "embedding dimension " + std::to_string(src.size()) +
                                                     " does not match the model");
    }
    const double raw = model.raw_predict(src, ref);
    out.push_back({id, clamp_score(raw), raw});
  }
  return out;
}

}  // namespace spksim

#endif  // SPKSIM_TRAINER_HPP
