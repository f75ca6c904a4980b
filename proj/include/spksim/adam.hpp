// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_ADAM_HPP
#define SPKSIM_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "spksim/dense_net.hpp"
#include "spksim/error.hpp"

namespace spksim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// A named parameter tensor and its gradient (same length).
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

/// One Adam update with bias correction. All gradients are checked before
/// any parameter is touched, so a failed step leaves the model unchanged.
inline void adam_step(std::span<const ParamBlock> blocks, AdamState& state, const AdamConfig& cfg) {
  for (const auto& b : blocks) {
    if (b.values.size() != b.grads.size()) {
      throw Error(ErrorCode::dimension_mismatch, "adam: gradient shape mismatch for " + b.name);
    }
    for (std::size_t i = 0; i < b.grads.size(); ++i) {
      if (!std::isfinite(b.grads[i])) {
        throw Error(ErrorCode::non_finite, "adam: non-finite gradient at " + b.name + "[" + std::to_string(i) + "]");
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& b : blocks) {
      state.m.emplace_back(b.values.size(), 0.0);
      state.v.emplace_back(b.values.size(), 0.0);
    }
  }
  if (state.m.size() != blocks.size()) throw Error(ErrorCode::dimension_mismatch, "adam: state does not match parameters");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (state.m[k].size() != blocks[k].values.size()) {
      throw Error(ErrorCode::dimension_mismatch, "adam: state does not match " + blocks[k].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      b.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

inline std::vector<ParamBlock> param_blocks(DenseNet& net, const Gradients& grads) {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    blocks.push_back({"layer" + std::to_string(l) + ".weights", layer.weights, grads.layers[l].weights});
    blocks.push_back({"layer" + std::to_string(l) + ".bias", layer.bias, grads.layers[l].bias});
  }
  return blocks;
}

inline nlohmann::ordered_json to_json(const AdamState& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["m"] = s.m;
  j["v"] = s.v;
  return j;
}

inline AdamState adam_state_from_json(const nlohmann::json& j) {
  AdamState s;
  try {
    s.step = j.at("step").get<std::uint64_t>();
    s.m = j.at("m").get<std::vector<std::vector<double>>>();
    s.v = j.at("v").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, std::string("malformed optimizer state: ") + e.what());
  }
  return s;
}

}  // namespace spksim

#endif  // SPKSIM_ADAM_HPP
