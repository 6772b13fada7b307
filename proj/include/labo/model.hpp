#pragma once

// Small fully connected classifier with hand-written forward/backward passes
// and SGD with momentum. ReLU on hidden layers, identity on the logit layer.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "labo/io.hpp"
#include "labo/numerics.hpp"

namespace labo {

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// weights is (out x in); bias has `out` entries.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
};

/// Parameter-shaped buffer: gradients, velocities.
struct ParamBuffers {
  std::vector<DenseLayer> layers;

  ParamBuffers& operator+=(const ParamBuffers& other) {
    check_same_shape(other);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& w = layers[l].weights.data;
      const auto& ow = other.layers[l].weights.data;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
      auto& b = layers[l].bias;
      const auto& ob = other.layers[l].bias;
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += ob[i];
    }
    return *this;
  }

  ParamBuffers& operator*=(double s) {
    for (auto& layer : layers) {
      for (double& v : layer.weights.data) v *= s;
      for (double& v : layer.bias) v *= s;
    }
    return *this;
  }

  void check_same_shape(const ParamBuffers& other) const {
    if (other.layers.size() != layers.size()) throw std::invalid_argument("ParamBuffers: layer count");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (other.layers[l].weights.rows != layers[l].weights.rows ||
          other.layers[l].weights.cols != layers[l].weights.cols ||
          other.layers[l].bias.size() != layers[l].bias.size()) {
        throw std::invalid_argument("ParamBuffers: shape mismatch in layer " + std::to_string(l));
      }
    }
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.data.size() + layer.bias.size();
    return n;
  }

  /// Flat view order: layer by layer, weights (row-major) then bias.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& layer : layers) {
      out.insert(out.end(), layer.weights.data.begin(), layer.weights.data.end());
      out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
  }

  void assign(std::span<const double> flat) {
    if (flat.size() != size()) throw std::invalid_argument("ParamBuffers::assign: size mismatch");
    std::size_t pos = 0;
    for (auto& layer : layers) {
      for (double& v : layer.weights.data) v = flat[pos++];
      for (double& v : layer.bias) v = flat[pos++];
    }
  }

  static ParamBuffers zeros_like(const std::vector<DenseLayer>& shape) {
    ParamBuffers out;
    for (const auto& layer : shape) {
      out.layers.push_back(DenseLayer{Matrix(layer.out_dim(), layer.in_dim()),
                                      std::vector<double>(layer.out_dim(), 0.0)});
    }
    return out;
  }
};

/// Activations recorded by a forward pass, consumed by backward.
struct ForwardCache {
  /// inputs[l] is the input to layer l; inputs[0] is x.
  std::vector<std::vector<double>> inputs;
  /// Pre-activations of each layer.
  std::vector<std::vector<double>> pre;

  bool empty() const { return inputs.empty(); }
};

class Mlp {
 public:
  Mlp() = default;

  /// All-zero parameters.
  static Mlp zeros(std::vector<std::size_t> layer_sizes, std::uint64_t seed = 0) {
    Mlp m;
    m.init_shapes(std::move(layer_sizes), seed);
    return m;
  }

  /// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  static Mlp he_uniform(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
    Mlp m;
    m.init_shapes(std::move(layer_sizes), seed);
    std::mt19937_64 rng(seed);
    for (auto& layer : m.params_.layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& w : layer.weights.data) w = dist(rng);
    }
    return m;
  }

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t num_classes() const { return sizes_.back(); }
  std::uint64_t seed() const { return seed_; }

  const ParamBuffers& params() const { return params_; }
  ParamBuffers& params() { return params_; }

  LogitVec forward(std::span<const double> x, ForwardCache& cache) const {
    if (x.size() != input_dim()) {
      throw std::invalid_argument("Mlp::forward: expected input dim " +
                                  std::to_string(input_dim()) + ", got " +
                                  std::to_string(x.size()));
    }
    cache.inputs.assign(1, std::vector<double>(x.begin(), x.end()));
    cache.pre.clear();
    const auto& layers = params_.layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      const auto& in = cache.inputs.back();
      std::vector<double> z(layer.bias);
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        const double* w = &layer.weights.data[r * layer.in_dim()];
        double acc = 0.0;
        for (std::size_t c = 0; c < layer.in_dim(); ++c) acc += w[c] * in[c];
        z[r] += acc;
      }
      cache.pre.push_back(z);
      if (l + 1 < layers.size()) {
        for (double& v : z) v = v > 0.0 ? v : 0.0;
        cache.inputs.push_back(std::move(z));
      }
    }
    return LogitVec(cache.pre.back());
  }

  LogitVec logits(std::span<const double> x) const {
    ForwardCache cache;
    return forward(x, cache);
  }

  /// Parameter gradients given d loss / d logits for the cached forward pass.
  ParamBuffers backward(const ForwardCache& cache, std::span<const double> grad_logits) const {
    ParamBuffers grads = ParamBuffers::zeros_like(params_.layers);
    backward_into(cache, grad_logits, grads);
    return grads;
  }

  /// Adds the parameter gradients for one cached forward pass into `acc`.
  void backward_into(const ForwardCache& cache, std::span<const double> grad_logits,
                     ParamBuffers& acc) const {
    if (cache.empty() || cache.pre.size() != params_.layers.size()) {
      throw std::logic_error("Mlp::backward: no forward cache");
    }
    if (grad_logits.size() != num_classes()) {
      throw std::invalid_argument("Mlp::backward: grad_logits dimension mismatch");
    }
    params_.check_same_shape(acc);
    std::vector<double> delta(grad_logits.begin(), grad_logits.end());
    for (std::size_t l = params_.layers.size(); l-- > 0;) {
      const auto& layer = params_.layers[l];
      const auto& in = cache.inputs[l];
      auto& g = acc.layers[l];
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        g.bias[r] += delta[r];
        double* gw = &g.weights.data[r * layer.in_dim()];
        for (std::size_t c = 0; c < layer.in_dim(); ++c) gw[c] += delta[r] * in[c];
      }
      if (l == 0) break;
      std::vector<double> prev(layer.in_dim(), 0.0);
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        const double* w = &layer.weights.data[r * layer.in_dim()];
        for (std::size_t c = 0; c < layer.in_dim(); ++c) prev[c] += w[c] * delta[r];
      }
      const auto& pre = cache.pre[l - 1];
      for (std::size_t c = 0; c < prev.size(); ++c) {
        if (!(pre[c] > 0.0)) prev[c] = 0.0;
      }
      delta = std::move(prev);
    }
  }

  bool operator==(const Mlp& other) const {
    return sizes_ == other.sizes_ && params_.flatten() == other.params_.flatten();
  }

 private:
  void init_shapes(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (auto s : layer_sizes) {
      if (s == 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    }
    if (layer_sizes.back() < 2) throw std::invalid_argument("Mlp: need at least 2 classes");
    sizes_ = std::move(layer_sizes);
    seed_ = seed;
    params_.layers.clear();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      params_.layers.push_back(
          DenseLayer{Matrix(sizes_[l + 1], sizes_[l]), std::vector<double>(sizes_[l + 1], 0.0)});
    }
  }

  std::vector<std::size_t> sizes_;
  std::uint64_t seed_ = 0;
  ParamBuffers params_;

  friend Mlp mlp_from_json(const nlohmann::json& j);
};

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  ParamBuffers velocity;

  OptimizerState() = default;
  OptimizerState(const Mlp& model, double lr, double mu, double wd)
      : learning_rate(lr), momentum(mu), weight_decay(wd),
        velocity(ParamBuffers::zeros_like(model.params().layers)) {
    if (!(lr > 0.0)) throw std::invalid_argument("OptimizerState: learning rate must be > 0");
    if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("OptimizerState: momentum in [0,1)");
    if (!(wd >= 0.0)) throw std::invalid_argument("OptimizerState: weight decay must be >= 0");
  }
};

/// v <- mu v + g + wd theta;  theta <- theta - lr v.
inline void sgd_step(Mlp& model, const ParamBuffers& grads, OptimizerState& state) {
  auto& params = model.params();
  params.check_same_shape(grads);
  params.check_same_shape(state.velocity);
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i] + state.weight_decay * theta[i];
      theta[i] -= state.learning_rate * v[i];
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights.data, grads.layers[l].weights.data,
           state.velocity.layers[l].weights.data);
    update(params.layers[l].bias, grads.layers[l].bias, state.velocity.layers[l].bias);
  }
}

// Checkpoint document:
// { "format": "labo-mlp", "version": 1, "seed": N, "layer_sizes": [...],
//   "layers": [ { "weights": {"shape": [out, in], "values": [...]},
//                 "bias": {"shape": [out], "values": [...]} }, ... ] }
inline constexpr const char* kCheckpointFormat = "labo-mlp";

inline nlohmann::json mlp_to_json(const Mlp& model) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = 1;
  j["seed"] = model.seed();
  j["layer_sizes"] = model.layer_sizes();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& layer : model.params().layers) {
    layers.push_back({{"weights",
                       {{"shape", {layer.weights.rows, layer.weights.cols}},
                        {"values", layer.weights.data}}},
                      {"bias", {{"shape", {layer.bias.size()}}, {"values", layer.bias}}}});
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("checkpoint: not a labo-mlp document");
  }
  Mlp m;
  m.init_shapes(j.at("layer_sizes").get<std::vector<std::size_t>>(),
                j.at("seed").get<std::uint64_t>());
  const auto& layers = j.at("layers");
  if (layers.size() != m.params_.layers.size()) {
    throw std::runtime_error("checkpoint: layer count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = m.params_.layers[l];
    const auto w_shape = layers[l].at("weights").at("shape").get<std::vector<std::size_t>>();
    if (w_shape != std::vector<std::size_t>{layer.weights.rows, layer.weights.cols}) {
      throw std::runtime_error("checkpoint: weight shape mismatch in layer " + std::to_string(l));
    }
    auto w = layers[l].at("weights").at("values").get<std::vector<double>>();
    auto b = layers[l].at("bias").at("values").get<std::vector<double>>();
    if (w.size() != layer.weights.data.size() || b.size() != layer.bias.size()) {
      throw std::runtime_error("checkpoint: value count mismatch in layer " + std::to_string(l));
    }
    layer.weights.data = std::move(w);
    layer.bias = std::move(b);
  }
  return m;
}

inline void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  write_file_atomic(path, mlp_to_json(model).dump(1) + "\n");
}

inline Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return mlp_from_json(nlohmann::json::parse(in));
}

}  // namespace labo
