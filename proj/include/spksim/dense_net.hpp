// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_DENSE_NET_HPP
#define SPKSIM_DENSE_NET_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spksim/error.hpp"
#include "spksim/random.hpp"

namespace spksim {

enum class ActivationKind { leaky_relu, identity, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double slope = 0.0;  // negative-side slope, leaky_relu only

  static Activation leaky_relu(double s) { return {ActivationKind::leaky_relu, s}; }
  static Activation identity() { return {ActivationKind::identity, 0.0}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }

  double apply(double x) const {
    switch (kind) {
      case ActivationKind::leaky_relu: return x > 0.0 ? x : slope * x;
      case ActivationKind::tanh: return std::tanh(x);
      case ActivationKind::identity: break;
    }
    return x;
  }

  /// d(apply)/dx at pre-activation x. LeakyReLU uses the negative slope at
  /// x == 0.
  double derivative(double x) const {
    switch (kind) {
      case ActivationKind::leaky_relu: return x > 0.0 ? 1.0 : slope;
      case ActivationKind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActivationKind::identity: break;
    }
    return 1.0;
  }

  bool operator==(const Activation&) const = default;
};

inline std::string_view to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::identity: break;
  }
  return "identity";
}

inline ActivationKind parse_activation_kind(std::string_view s) {
  if (s == "leaky_relu") return ActivationKind::leaky_relu;
  if (s == "tanh") return ActivationKind::tanh;
  if (s == "identity") return ActivationKind::identity;
  throw Error(ErrorCode::schema, "unknown activation '" + std::string(s) + "'");
}

/// Fully connected layer; `weights` is row-major [out x in].
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation;

  double weight(std::size_t row, std::size_t col) const { return weights[row * in + col]; }

  bool operator==(const DenseLayer&) const = default;
};

struct ForwardMode {
  bool training = false;
  std::uint64_t seed = 0;

  static ForwardMode infer() { return {false, 0}; }
  static ForwardMode train(std::uint64_t seed) { return {true, seed}; }
};

/// Everything backward() needs from one forward() call.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to layer i
  std::vector<std::vector<double>> pre;     // pre-activations of layer i
  std::vector<std::vector<double>> masks;   // dropout multipliers after layer i (empty = none)
  std::vector<double> output;

  double scalar() const {
    if (output.size() != 1) throw Error(ErrorCode::dimension_mismatch, "network output is not scalar");
    return output[0];
  }
};

struct LayerGradients {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  std::vector<double> input;  // d(output . upstream)/d(input)

  void add(const Gradients& other, double scale = 1.0) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t i = 0; i < layers[l].weights.size(); ++i) layers[l].weights[i] += scale * other.layers[l].weights[i];
      for (std::size_t i = 0; i < layers[l].bias.size(); ++i) layers[l].bias[i] += scale * other.layers[l].bias[i];
    }
  }

  void scale(double s) {
    for (auto& l : layers) {
      for (double& g : l.weights) g *= s;
      for (double& g : l.bias) g *= s;
    }
  }
};

/// Multilayer perceptron with inverted dropout after every hidden layer.
/// Inference is a pure function of the parameters and the input.
class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::vector<DenseLayer> layers, double dropout_rate)
      : layers_(std::move(layers)), dropout_rate_(dropout_rate) {
    validate();
  }

  /// Layer sizes `dims` (input first). Hidden layers use `hidden`, the last
  /// layer `output`. Weights ~ U(-a, a) with a = sqrt(6 / (in + out)), biases 0.
  static DenseNet build(std::span<const std::size_t> dims, Activation hidden, Activation output,
                        double dropout_rate, std::uint64_t seed) {
    if (dims.size() < 2) throw Error(ErrorCode::invalid_argument, "network needs at least one layer");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      DenseLayer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
      layer.weights.resize(layer.in * layer.out);
      for (double& w : layer.weights) w = rng.uniform(-a, a);
      layer.bias.assign(layer.out, 0.0);
      layer.activation = (l + 2 == dims.size()) ? output : hidden;
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers), dropout_rate);
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  double dropout_rate() const { return dropout_rate_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers_.empty()) throw Error(ErrorCode::invalid_argument, "network has no layers");
    if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "dropout rate must be in [0, 1)");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.in == 0 || layer.out == 0 || layer.weights.size() != layer.in * layer.out ||
          layer.bias.size() != layer.out) {
        throw Error(ErrorCode::dimension_mismatch, "layer " + std::to_string(l) + " has inconsistent shape");
      }
      if (l > 0 && layers_[l - 1].out != layer.in) {
        throw Error(ErrorCode::dimension_mismatch, "layer " + std::to_string(l) + " input does not match previous output");
      }
    }
    if (auto bad = first_non_finite(); !bad.empty()) {
      throw Error(ErrorCode::non_finite, "non-finite parameter " + bad);
    }
  }

  /// Path of the first non-finite parameter, or empty.
  std::string first_non_finite() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t i = 0; i < layers_[l].weights.size(); ++i) {
        if (!std::isfinite(layers_[l].weights[i])) return "layer" + std::to_string(l) + ".weights[" + std::to_string(i) + "]";
      }
      for (std::size_t i = 0; i < layers_[l].bias.size(); ++i) {
        if (!std::isfinite(layers_[l].bias[i])) return "layer" + std::to_string(l) + ".bias[" + std::to_string(i) + "]";
      }
    }
    return {};
  }

  ForwardCache forward(std::span<const double> input, ForwardMode mode) const {
    if (input.size() != input_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "input has dimension " + std::to_string(input.size()) +
                                                     ", network expects " + std::to_string(input_dim()));
    }
    ForwardCache cache;
    cache.inputs.reserve(layers_.size());
    cache.pre.reserve(layers_.size());
    cache.masks.resize(layers_.size());
    Rng rng(mode.seed);
    const double keep_scale = 1.0 / (1.0 - dropout_rate_);
    std::vector<double> x(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      std::vector<double> z(layer.bias);
      for (std::size_t r = 0; r < layer.out; ++r) {
        const double* w = &layer.weights[r * layer.in];
        double acc = 0.0;
        for (std::size_t c = 0; c < layer.in; ++c) acc += w[c] * x[c];
        z[r] += acc;
      }
      std::vector<double> y(layer.out);
      for (std::size_t r = 0; r < layer.out; ++r) y[r] = layer.activation.apply(z[r]);
      const bool hidden = l + 1 < layers_.size();
      if (mode.training && hidden && dropout_rate_ > 0.0) {
        auto& mask = cache.masks[l];
        mask.resize(layer.out);
        for (std::size_t r = 0; r < layer.out; ++r) {
          mask[r] = rng.uniform() < dropout_rate_ ? 0.0 : keep_scale;
          y[r] *= mask[r];
        }
      }
      cache.inputs.push_back(std::move(x));
      cache.pre.push_back(std::move(z));
      x = std::move(y);
    }
    for (double v : x) {
      if (!std::isfinite(v)) {
        const auto bad = first_non_finite();
        throw Error(ErrorCode::non_finite,
                    bad.empty() ? std::string("non-finite network output") : "non-finite parameter " + bad);
      }
    }
    cache.output = std::move(x);
    return cache;
  }

  /// Inference-mode scalar output.
  double predict(std::span<const double> input) const {
    return forward(input, ForwardMode::infer()).scalar();
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) g.layers.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
    g.input.assign(input_dim(), 0.0);
    return g;
  }

  /// Gradients of (output . upstream) with respect to every parameter and
  /// the input, following the dropout masks recorded in `cache`.
  Gradients backward(const ForwardCache& cache, std::span<const double> upstream) const {
    Gradients g = zero_gradients();
    accumulate_gradients(cache, upstream, g);
    return g;
  }

  /// Adds the parameter gradients of (output . upstream) into `acc` and
  /// overwrites `acc.input` with the input gradient.
  void accumulate_gradients(const ForwardCache& cache, std::span<const double> upstream, Gradients& acc) const {
    if (cache.inputs.size() != layers_.size() || cache.pre.size() != layers_.size() ||
        upstream.size() != output_dim() || acc.layers.size() != layers_.size()) {
      throw Error(ErrorCode::dimension_mismatch, "backward: cache does not match this network");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (cache.inputs[l].size() != layers_[l].in || cache.pre[l].size() != layers_[l].out) {
        throw Error(ErrorCode::dimension_mismatch, "backward: stale cache for layer " + std::to_string(l));
      }
    }
    std::vector<double> delta(upstream.begin(), upstream.end());  // dL/d(layer output)
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      const auto& mask = cache.masks[li];
      for (std::size_t r = 0; r < layer.out; ++r) {
        if (!mask.empty()) delta[r] *= mask[r];
        delta[r] *= layer.activation.derivative(cache.pre[li][r]);
      }
      auto& lg = acc.layers[li];
      const auto& x = cache.inputs[li];
      std::vector<double> next(layer.in, 0.0);
      for (std::size_t r = 0; r < layer.out; ++r) {
        const double d = delta[r];
        lg.bias[r] += d;
        if (d == 0.0) continue;
        double* gw = &lg.weights[r * layer.in];
        const double* w = &layer.weights[r * layer.in];
        for (std::size_t c = 0; c < layer.in; ++c) {
          gw[c] += d * x[c];
          next[c] += d * w[c];
        }
      }
      delta = std::move(next);
    }
    acc.input = std::move(delta);
  }

  Gradients backward(const ForwardCache& cache, double upstream) const {
    const double u[1] = {upstream};
    return backward(cache, std::span<const double>(u, 1));
  }

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<DenseLayer> layers_;
  double dropout_rate_ = 0.0;
};

inline nlohmann::ordered_json network_to_json(const DenseNet& net) {
  nlohmann::ordered_json j;
  std::vector<std::size_t> dims;
  std::vector<nlohmann::ordered_json> acts;
  auto weights = nlohmann::ordered_json::array();
  auto biases = nlohmann::ordered_json::array();
  for (const auto& l : net.layers()) {
    if (dims.empty()) dims.push_back(l.in);
    dims.push_back(l.out);
    nlohmann::ordered_json a;
    a["kind"] = to_string(l.activation.kind);
    a["slope"] = l.activation.slope;
    acts.push_back(a);
    weights.push_back(l.weights);
    biases.push_back(l.bias);
  }
  j["layer_dims"] = dims;
  j["activations"] = acts;
  j["dropout_rate"] = net.dropout_rate();
  j["weights"] = weights;
  j["biases"] = biases;
  return j;
}

inline DenseNet network_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& acts = j.at("activations");
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (dims.size() < 2 || acts.size() + 1 != dims.size() || weights.size() + 1 != dims.size() ||
        biases.size() + 1 != dims.size()) {
      throw Error(ErrorCode::schema, "checkpoint layer arrays have inconsistent lengths");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      DenseLayer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      layer.weights = weights[l].get<std::vector<double>>();
      layer.bias = biases[l].get<std::vector<double>>();
      layer.activation.kind = parse_activation_kind(acts[l].at("kind").get<std::string>());
      layer.activation.slope = acts[l].at("slope").get<double>();
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers), j.at("dropout_rate").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace spksim

#endif  // SPKSIM_DENSE_NET_HPP
