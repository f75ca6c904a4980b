// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_LOSSES_HPP
#define SPKSIM_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "json.hpp"

#include "spksim/config_json.hpp"
#include "spksim/error.hpp"
#include "spksim/score_stats.hpp"

namespace spksim {

enum class LossKind { mse, weighted_mse, mahalanobis, mahalanobis_single };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::weighted_mse: return "wmse";
    case LossKind::mahalanobis: return "mahalanobis";
    case LossKind::mahalanobis_single: return "mahalanobis-single";
  }
  return "mse";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::mse;
  if (s == "wmse") return LossKind::weighted_mse;
  if (s == "mahalanobis") return LossKind::mahalanobis;
  if (s == "mahalanobis-single") return LossKind::mahalanobis_single;
  throw Error(ErrorCode::invalid_argument,
              "unknown loss '" + std::string(s) + "' (valid: mse, wmse, mahalanobis, mahalanobis-single)");
}

/// Loss selection. For weighted MSE the per-example weights are not stored
/// here: the trainer derives them from the training ids of each fold with
/// density_weights(weight_bin_width, weight_epsilon).
struct LossSpec {
  LossKind kind = LossKind::mahalanobis;
  double epsilon_sd = 1.0;  // floor for sigma(X)
  double weight_bin_width = 5.0;
  double weight_epsilon = 1.0;

  void validate() const {
    if (!(epsilon_sd > 0.0)) throw Error(ErrorCode::invalid_config, "epsilon_sd must be > 0");
    if (!(weight_bin_width > 0.0)) throw Error(ErrorCode::invalid_config, "weight_bin_width must be > 0");
    if (!(weight_epsilon >= 0.0)) throw Error(ErrorCode::invalid_config, "weight_epsilon must be >= 0");
  }
};

inline nlohmann::json to_json(const LossSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"epsilon_sd", s.epsilon_sd},
          {"weight_bin_width", s.weight_bin_width},
          {"weight_epsilon", s.weight_epsilon}};
}

inline LossSpec loss_spec_from_json(const nlohmann::json& j) {
  config::check_keys(j, "loss", {"kind", "epsilon_sd", "weight_bin_width", "weight_epsilon"});
  LossSpec s;
  std::string kind = std::string(to_string(s.kind));
  config::read(j, "kind", kind);
  try {
    s.kind = parse_loss_kind(kind);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
  config::read(j, "epsilon_sd", s.epsilon_sd);
  config::read(j, "weight_bin_width", s.weight_bin_width);
  config::read(j, "weight_epsilon", s.weight_epsilon);
  s.validate();
  return s;
}

/// Loss value and its derivative with respect to the prediction.
struct LossValue {
  double value = 0.0;
  double grad = 0.0;
};

inline double loss_mse(double pred, double target_mean) {
  const double d = pred - target_mean;
  return d * d;
}

inline LossValue mse_with_grad(double pred, double target, double weight = 1.0) {
  const double d = pred - target;
  return {weight * d * d, 2.0 * weight * d};
}

/// |target - pred| / sigma with the subgradient 0 at pred == target.
inline LossValue scaled_abs_with_grad(double pred, double target, double sigma) {
  const double d = pred - target;
  const double g = d > 0.0 ? 1.0 / sigma : (d < 0.0 ? -1.0 / sigma : 0.0);
  return {std::abs(d) / sigma, g};
}

inline double effective_sd(const ScoreDistribution& dist, double epsilon_sd) {
  return std::max(dist.sd, epsilon_sd);
}

/// Number of standard deviations between the prediction and the mean
/// listener score: |E(X) - pred| / max(sigma(X), epsilon_sd).
inline double loss_mahalanobis(double pred, const ScoreDistribution& dist, double epsilon_sd) {
  return std::abs(dist.mean - pred) / effective_sd(dist, epsilon_sd);
}

inline LossValue mahalanobis_with_grad(double pred, const ScoreDistribution& dist, double epsilon_sd) {
  return scaled_abs_with_grad(pred, dist.mean, effective_sd(dist, epsilon_sd));
}

/// Per-listener variant: the individual score replaces the mean, sigma is
/// still the example's listener spread.
inline double loss_mahalanobis_single(double pred, double individual_score, const ScoreDistribution& dist,
                                      double epsilon_sd) {
  if (std::find(dist.raw.begin(), dist.raw.end(), individual_score) == dist.raw.end()) {
    throw Error(ErrorCode::invalid_argument, "score is not part of the distribution of '" + dist.example_id + "'");
  }
  return std::abs(individual_score - pred) / effective_sd(dist, epsilon_sd);
}

inline LossValue mahalanobis_single_with_grad(double pred, double individual_score, const ScoreDistribution& dist,
                                              double epsilon_sd) {
  return scaled_abs_with_grad(pred, individual_score, effective_sd(dist, epsilon_sd));
}

}  // namespace spksim

#endif  // SPKSIM_LOSSES_HPP
