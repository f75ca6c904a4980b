// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_CROSS_VALIDATION_HPP
#define SPKSIM_CROSS_VALIDATION_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spksim/config_json.hpp"
#include "spksim/dataset.hpp"
#include "spksim/error.hpp"
#include "spksim/losses.hpp"
#include "spksim/random.hpp"
#include "spksim/score_stats.hpp"
#include "spksim/trainer.hpp"

namespace spksim {

enum class FoldGrouping { by_example, by_system };

inline std::string_view to_string(FoldGrouping g) {
  return g == FoldGrouping::by_example ? "by_example" : "by_system";
}

inline FoldGrouping parse_fold_grouping(std::string_view s) {
  if (s == "by_example") return FoldGrouping::by_example;
  if (s == "by_system") return FoldGrouping::by_system;
  throw Error(ErrorCode::invalid_argument, "unknown grouping '" + std::string(s) + "' (valid: by_example, by_system)");
}

struct CvPlan {
  std::size_t n_folds = 10;
  FoldGrouping grouping = FoldGrouping::by_example;
  std::uint64_t rng_seed = 0;
  std::map<std::string, std::size_t> fold_of;

  std::vector<std::string> ids_in_fold(std::size_t fold) const {
    std::vector<std::string> ids;
    for (const auto& [id, f] : fold_of) {
      if (f == fold) ids.push_back(id);
    }
    return ids;
  }
};

/// Assigns folds after a seeded shuffle. By example: round robin, so fold
/// sizes differ by at most one. By system: whole systems go to the currently
/// smallest fold (lowest index on ties).
inline CvPlan make_cv_plan(const EvaluationDataset& ds, std::size_t n_folds, FoldGrouping grouping,
                           std::uint64_t seed) {
  if (n_folds < 2) throw Error(ErrorCode::invalid_config, "n_folds must be >= 2");
  CvPlan plan;
  plan.n_folds = n_folds;
  plan.grouping = grouping;
  plan.rng_seed = seed;
  Rng rng(seed);
  if (grouping == FoldGrouping::by_example) {
    auto ids = ds.example_ids();
    if (ids.size() < n_folds) {
      throw Error(ErrorCode::invalid_config, "n_folds (" + std::to_string(n_folds) + ") exceeds example count (" +
                                                 std::to_string(ids.size()) + ")");
    }
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) plan.fold_of[ids[i]] = i % n_folds;
    return plan;
  }
  std::vector<std::string> systems;
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& ex : ds.examples()) {
    auto& m = members[ex.system_id];
    if (m.empty()) systems.push_back(ex.system_id);
    m.push_back(ex.example_id);
  }
  if (systems.size() < n_folds) {
    throw Error(ErrorCode::invalid_config, "n_folds (" + std::to_string(n_folds) + ") exceeds system count (" +
                                               std::to_string(systems.size()) + ")");
  }
  rng.shuffle(systems);
  std::vector<std::size_t> sizes(n_folds, 0);
  for (const auto& sys : systems) {
    const auto f = static_cast<std::size_t>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (const auto& id : members[sys]) plan.fold_of[id] = f;
    sizes[f] += members[sys].size();
  }
  return plan;
}

/// Checks that the plan partitions exactly the dataset's examples into
/// n_folds non-empty folds.
inline void validate_plan(const CvPlan& plan, const EvaluationDataset& ds) {
  if (plan.n_folds < 2) throw Error(ErrorCode::invalid_config, "n_folds must be >= 2");
  std::vector<std::size_t> sizes(plan.n_folds, 0);
  for (const auto& [id, f] : plan.fold_of) {
    if (!ds.contains_example(id)) throw Error(ErrorCode::unknown_id, "plan references unknown example '" + id + "'");
    if (f >= plan.n_folds) throw Error(ErrorCode::invalid_config, "fold index out of range for '" + id + "'");
    ++sizes[f];
  }
  for (const auto& ex : ds.examples()) {
    if (!plan.fold_of.count(ex.example_id)) {
      throw Error(ErrorCode::invalid_config, "example '" + ex.example_id + "' has no fold assignment");
    }
  }
  for (std::size_t f = 0; f < sizes.size(); ++f) {
    if (sizes[f] == 0) throw Error(ErrorCode::invalid_config, "fold " + std::to_string(f) + " is empty");
  }
}

struct CvSettings {
  std::size_t n_folds = 10;
  FoldGrouping grouping = FoldGrouping::by_example;
};

inline nlohmann::json to_json(const CvSettings& s) {
  return {{"n_folds", s.n_folds}, {"grouping", std::string(to_string(s.grouping))}};
}

inline CvSettings cv_settings_from_json(const nlohmann::json& j) {
  config::check_keys(j, "cv", {"n_folds", "grouping"});
  CvSettings s;
  config::read(j, "n_folds", s.n_folds);
  std::string g(to_string(s.grouping));
  config::read(j, "grouping", g);
  try {
    s.grouping = parse_fold_grouping(g);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
  if (s.n_folds < 2) throw Error(ErrorCode::invalid_config, "n_folds must be >= 2");
  return s;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  MetricReport report;
  bool skipped = false;  // no model was trained; test units got the fallback mean
  std::string warning;
  std::vector<EpochRecord> curve;
};

struct UnitPrediction {
  std::string id;
  std::string parent_id;
  std::size_t fold = 0;
  double value = 0.0;
  double raw = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  bool fallback = false;
};

struct CvResult {
  CvPlan plan;
  std::vector<FoldResult> folds;  // sorted by fold index
  MetricReport pooled;
  std::vector<UnitPrediction> predictions;  // unit order of the input set
  std::vector<RegressionModel> models;      // one per trained fold, may be empty
};

inline nlohmann::ordered_json to_json(const CvResult& r) {
  nlohmann::ordered_json j;
  j["n_folds"] = r.plan.n_folds;
  j["grouping"] = std::string(to_string(r.plan.grouping));
  j["seed"] = r.plan.rng_seed;
  j["pooled"] = to_json(r.pooled);
  j["avg_pearson"] = {{"mean", r.pooled.avg_pearson_mean}, {"sd", r.pooled.avg_pearson_sd}};
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["n_train"] = f.n_train;
    fj["skipped"] = f.skipped;
    fj["warning"] = f.warning;
    fj["report"] = to_json(f.report);
    folds.push_back(fj);
  }
  j["per_fold"] = folds;
  return j;
}

inline std::string predictions_jsonl(const CvResult& r) {
  std::string out;
  for (const auto& p : r.predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["example_id"] = p.parent_id;
    j["fold"] = p.fold;
    j["prediction"] = p.value;
    j["raw"] = p.raw;
    j["mean"] = p.mean;
    j["sd"] = p.sd;
    j["fallback"] = p.fallback;
    out += j.dump() + "\n";
  }
  return out;
}

/// A trained fold: a raw-output function over unit features, plus the model
/// when one exists.
struct FoldModel {
  std::function<double(std::span<const double>)> predict;
  std::optional<RegressionModel> model;
};

using FoldFitter = std::function<FoldModel(const UnitSet&, std::span<const std::size_t> train_idx, std::size_t fold)>;

namespace detail {

inline bool has_variance(std::span<const double> xs) {
  return std::any_of(xs.begin(), xs.end(), [&](double x) { return x != xs[0]; });
}

}  // namespace detail

/// Cross-validation over arbitrary units. Folds come from the plan via each
/// unit's parent id. A fold whose training targets are constant is skipped:
/// its test units are predicted with the training mean and flagged. The
/// pooled report covers every unit; avg Pearson uses folds whose test
/// predictions and targets both vary.
inline CvResult cross_validate_units(const UnitSet& set, const CvPlan& plan, const FoldFitter& fitter) {
  if (set.units.empty()) throw Error(ErrorCode::empty_input, "cross-validation: no units");
  std::vector<std::size_t> fold_of_unit(set.units.size());
  for (std::size_t i = 0; i < set.units.size(); ++i) {
    auto it = plan.fold_of.find(set.units[i].parent_id);
    if (it == plan.fold_of.end()) {
      throw Error(ErrorCode::invalid_config, "unit '" + set.units[i].id + "' has a parent without fold assignment");
    }
    if (it->second >= plan.n_folds) throw Error(ErrorCode::invalid_config, "fold index out of range");
    fold_of_unit[i] = it->second;
  }

  CvResult result;
  result.plan = plan;
  result.predictions.resize(set.units.size());
  std::vector<double> fold_pearsons;
  for (std::size_t f = 0; f < plan.n_folds; ++f) {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < set.units.size(); ++i) (fold_of_unit[i] == f ? test_idx : train_idx).push_back(i);
    FoldResult fr;
    fr.fold = f;
    fr.n_train = train_idx.size();
    if (test_idx.empty()) throw Error(ErrorCode::invalid_config, "fold " + std::to_string(f) + " is empty");
    if (train_idx.empty()) throw Error(ErrorCode::invalid_config, "fold " + std::to_string(f) + " has no training data");

    std::vector<double> train_targets;
    for (auto i : train_idx) train_targets.push_back(set.dist_of(set.units[i]).mean);

    std::function<double(std::span<const double>)> predict_fn;
    if (!detail::has_variance(train_targets)) {
      const double fallback = mean_of(train_targets);
      predict_fn = [fallback](std::span<const double>) { return fallback; };
      fr.skipped = true;
      fr.warning = "zero-variance training targets; fallback mean predictor used";
    } else {
      auto fm = fitter(set, train_idx, f);
      predict_fn = std::move(fm.predict);
      if (fm.model) {
        fr.curve = fm.model->curve;
        result.models.push_back(std::move(*fm.model));
      }
    }

    std::vector<double> preds;
    std::vector<const ScoreDistribution*> dists;
    for (auto i : test_idx) {
      const auto& u = set.units[i];
      const auto& d = set.dist_of(u);
      auto& p = result.predictions[i];
      p.id = u.id;
      p.parent_id = u.parent_id;
      p.fold = f;
      p.raw = predict_fn(u.features);
      p.value = clamp_score(p.raw);
      p.mean = d.mean;
      p.sd = d.sd;
      p.fallback = fr.skipped;
      preds.push_back(p.value);
      dists.push_back(&d);
    }
    std::vector<double> means;
    for (const auto* d : dists) means.push_back(d->mean);
    if (preds.size() >= 2 && detail::has_variance(preds) && detail::has_variance(means)) {
      fr.report = score_predictions(preds, dists);
      fold_pearsons.push_back(fr.report.pearson);
    } else {
      fr.report.n = preds.size();
      fr.report.rmse = rmse(preds, means);
      std::size_t hits = 0;
      for (std::size_t k = 0; k < preds.size(); ++k) hits += within_sigma(preds[k], *dists[k]) ? 1 : 0;
      fr.report.accuracy = static_cast<double>(hits) / static_cast<double>(preds.size());
      if (fr.warning.empty()) fr.warning = "fold correlation undefined (constant predictions or targets)";
    }
    result.folds.push_back(std::move(fr));
  }

  std::vector<double> all_preds;
  std::vector<const ScoreDistribution*> all_dists;
  for (std::size_t i = 0; i < set.units.size(); ++i) {
    all_preds.push_back(result.predictions[i].value);
    all_dists.push_back(&set.dist_of(set.units[i]));
  }
  result.pooled = score_predictions(all_preds, all_dists);
  if (!fold_pearsons.empty()) {
    result.pooled.avg_pearson_mean = mean_of(fold_pearsons);
    result.pooled.avg_pearson_sd = sample_sd(fold_pearsons);
  }
  return result;
}

inline FoldFitter regressor_fitter(const LossSpec& loss, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                                   std::uint64_t plan_seed, std::string fingerprint = {}) {
  return [=](const UnitSet& set, std::span<const std::size_t> train_idx, std::size_t fold) {
    auto model = fit_regressor(set, train_idx, loss, net_cfg, train_cfg, derive_seed(plan_seed, fold));
    model.dataset_fingerprint = fingerprint;
    FoldModel fm;
    fm.model = model;
    fm.predict = [m = std::move(model)](std::span<const double> x) { return m.raw_output(x); };
    return fm;
  };
}

/// Utterance-level cross-validation with per-fold seeds derived from the plan.
inline CvResult cross_validate(const EvaluationDataset& ds, const LossSpec& loss, const NetConfig& net_cfg,
                               const TrainConfig& train_cfg, const CvPlan& plan) {
  validate_plan(plan, ds);
  const auto set = utterance_units(ds, net_cfg.features);
  return cross_validate_units(set, plan, regressor_fitter(loss, net_cfg, train_cfg, plan.rng_seed,
                                                          dataset_fingerprint(ds)));
}

/// Piece-level cross-validation: every piece pair is a unit carrying its
/// parent's score distribution, and folds are assigned per parent.
inline CvResult evaluate_pieces(const EvaluationDataset& ds, const LossSpec& loss, const NetConfig& net_cfg,
                                const TrainConfig& train_cfg, const CvPlan& plan) {
  if (!ds.has_pieces()) throw Error(ErrorCode::state, "dataset has no pieces");
  validate_plan(plan, ds);
  const auto set = piece_units(ds, net_cfg.features);
  return cross_validate_units(set, plan, regressor_fitter(loss, net_cfg, train_cfg, plan.rng_seed,
                                                          dataset_fingerprint(ds)));
}

inline std::string fold_curves_csv(const CvResult& r) {
  std::string out = "fold,epoch,train_loss,val_loss\n";
  for (const auto& f : r.folds) {
    for (const auto& rec : f.curve) {
      out += std::to_string(f.fold) + "," + std::to_string(rec.epoch) + "," + nlohmann::json(rec.train_loss).dump() +
             "," + (std::isfinite(rec.val_loss) ? nlohmann::json(rec.val_loss).dump() : std::string()) + "\n";
    }
  }
  return out;
}

}  // namespace spksim

#endif  // SPKSIM_CROSS_VALIDATION_HPP
