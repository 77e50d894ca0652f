#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ikr/error.hpp"

namespace ikr {

enum class LayerKind : std::uint8_t {
  Conv = 0,
  MaxPool = 1,
  FullyConnected = 2,
  Softmax = 3,
};

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::FullyConnected: return "FC";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

// Channel-major (C, H, W) shape of a feature-map stack.
struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.height << "x" << s.width;
  return os.str();
}

// For FullyConnected layers in_maps/out_maps are the vector lengths and
// kernel_dim is 1. Softmax carries the class count in both map fields.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t in_maps = 0;
  std::size_t out_maps = 0;
  std::size_t kernel_dim = 0;
  std::size_t stride = 1;
  std::size_t pool_dim = 0;

  bool has_weights() const {
    return kind == LayerKind::Conv || kind == LayerKind::FullyConnected;
  }
  std::size_t weight_count() const {
    if (kind == LayerKind::Conv) return out_maps * in_maps * kernel_dim * kernel_dim;
    if (kind == LayerKind::FullyConnected) return out_maps * in_maps;
    return 0;
  }

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1) {
    return {LayerKind::Conv, in, out, k, stride, 0};
  }
  static LayerSpec max_pool(std::size_t channels, std::size_t dim) {
    return {LayerKind::MaxPool, channels, channels, 0, dim, dim};
  }
  static LayerSpec fully_connected(std::size_t in, std::size_t out) {
    return {LayerKind::FullyConnected, in, out, 1, 1, 0};
  }
  static LayerSpec softmax(std::size_t classes) {
    return {LayerKind::Softmax, classes, classes, 0, 1, 0};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Row-major weights: (out_maps, in_maps, K, K) for conv, (out_dim, in_dim) for FC.
struct WeightTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
  std::vector<float> bias;

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty() && bias.empty(); }

  static WeightTensor zeros(const LayerSpec& spec) {
    WeightTensor w;
    if (spec.kind == LayerKind::Conv) {
      w.shape = {spec.out_maps, spec.in_maps, spec.kernel_dim, spec.kernel_dim};
    } else if (spec.kind == LayerKind::FullyConnected) {
      w.shape = {spec.out_maps, spec.in_maps};
    } else {
      return w;
    }
    w.data.assign(spec.weight_count(), 0.0f);
    w.bias.assign(spec.out_maps, 0.0f);
    return w;
  }

  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

// `weights` is aligned with `layers`; pooling and softmax layers hold an
// empty tensor.
struct NetworkModel {
  std::string name;
  Shape3 input;
  std::vector<LayerSpec> layers;
  std::vector<WeightTensor> weights;

  std::size_t num_classes() const {
    return layers.empty() ? 0 : layers.back().out_maps;
  }

  // Indices into `layers` of the Conv/FC layers, in order. Prune configs and
  // reports address layers by position in this list.
  std::vector<std::size_t> weight_layers() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].has_weights()) idx.push_back(i);
    return idx;
  }

  std::size_t dense_weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight_count();
    return n;
  }

  friend bool operator==(const NetworkModel&, const NetworkModel&) = default;
};

// A ReLU follows every Conv/FC layer except the one feeding the softmax.
inline bool has_relu(const std::vector<LayerSpec>& layers, std::size_t layer) {
  if (!layers[layer].has_weights()) return false;
  return !(layer + 1 < layers.size() && layers[layer + 1].kind == LayerKind::Softmax);
}
inline bool has_relu(const NetworkModel& m, std::size_t layer) { return has_relu(m.layers, layer); }

inline Shape3 output_shape(const LayerSpec& spec, const Shape3& in, std::size_t layer_index) {
  auto fail = [&](const std::string& why) {
    throw DimensionError("layer " + std::to_string(layer_index) + " (" + to_string(spec.kind) +
                         "): " + why + " (input " + to_string(in) + ")");
  };
  switch (spec.kind) {
    case LayerKind::Conv: {
      if (spec.in_maps == 0 || spec.out_maps == 0 || spec.kernel_dim == 0 || spec.stride == 0)
        fail("conv dims must be positive");
      if (in.channels != spec.in_maps) fail("expected " + std::to_string(spec.in_maps) + " input maps");
      if (in.height < spec.kernel_dim || in.width < spec.kernel_dim) fail("kernel larger than input");
      return {spec.out_maps, (in.height - spec.kernel_dim) / spec.stride + 1,
              (in.width - spec.kernel_dim) / spec.stride + 1};
    }
    case LayerKind::MaxPool: {
      if (spec.pool_dim == 0 || spec.stride == 0) fail("pool dims must be positive");
      if (in.channels != spec.in_maps) fail("expected " + std::to_string(spec.in_maps) + " maps");
      if (in.height < spec.pool_dim || in.width < spec.pool_dim) fail("pool window larger than input");
      return {in.channels, (in.height - spec.pool_dim) / spec.stride + 1,
              (in.width - spec.pool_dim) / spec.stride + 1};
    }
    case LayerKind::FullyConnected:
      if (spec.in_maps == 0 || spec.out_maps == 0) fail("fc dims must be positive");
      if (in.size() != spec.in_maps) fail("expected input length " + std::to_string(spec.in_maps));
      return {spec.out_maps, 1, 1};
    case LayerKind::Softmax:
      if (in.size() != spec.in_maps) fail("expected " + std::to_string(spec.in_maps) + " logits");
      return {spec.out_maps, 1, 1};
  }
  fail("unknown layer kind");
  return {};
}

// Input shape of every layer, followed by the network output shape.
inline std::vector<Shape3> layer_shapes(const NetworkModel& m) {
  std::vector<Shape3> shapes{m.input};
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    shapes.push_back(output_shape(m.layers[i], shapes.back(), i));
  return shapes;
}

// Checks shapes, weight tensor sizes, and finiteness.
inline void validate(const NetworkModel& m) {
  if (m.layers.empty()) throw DimensionError("model has no layers");
  if (m.weights.size() != m.layers.size())
    throw DimensionError("model has " + std::to_string(m.weights.size()) + " weight tensors for " +
                         std::to_string(m.layers.size()) + " layers");
  (void)layer_shapes(m);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& spec = m.layers[i];
    const auto& w = m.weights[i];
    if (!spec.has_weights()) {
      if (!w.empty()) throw DimensionError("layer " + std::to_string(i) + " should carry no weights");
      continue;
    }
    if (w.data.size() != spec.weight_count() || w.bias.size() != spec.out_maps)
      throw DimensionError("layer " + std::to_string(i) + ": weight tensor size mismatch");
    std::size_t prod = 1;
    for (auto d : w.shape) prod *= d;
    if (prod != w.data.size())
      throw DimensionError("layer " + std::to_string(i) + ": shape product differs from element count");
    for (float v : w.data)
      if (!std::isfinite(v)) throw DataError("layer " + std::to_string(i) + ": non-finite weight");
    for (float v : w.bias)
      if (!std::isfinite(v)) throw DataError("layer " + std::to_string(i) + ": non-finite bias");
  }
}

namespace detail {

inline std::size_t parse_count(std::string_view s, std::string_view token) {
  if (s.empty()) throw UsageError("malformed architecture token '" + std::string(token) + "'");
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw UsageError("malformed architecture token '" + std::string(token) + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

}  // namespace detail

// Decodes strings such as "1x20C5-MP2-1x50C5-MP2-500FC-10Softmax":
//   RxMCk    R stacked conv layers with M maps and k x k kernels
//   MPp      non-overlapping p x p max pooling
//   NFC      fully connected layer with N outputs
//   NSoftmax fully connected layer with N outputs followed by softmax
inline std::vector<LayerSpec> parse_architecture(std::string_view arch, const Shape3& input) {
  std::vector<LayerSpec> layers;
  Shape3 cur = input;
  auto push = [&](const LayerSpec& s) {
    cur = output_shape(s, cur, layers.size());
    layers.push_back(s);
  };
  std::size_t pos = 0;
  while (pos <= arch.size()) {
    auto end = arch.find('-', pos);
    if (end == std::string_view::npos) end = arch.size();
    std::string_view tok = arch.substr(pos, end - pos);
    if (tok.empty()) throw UsageError("empty token in architecture '" + std::string(arch) + "'");

    if (tok.starts_with("MP")) {
      push(LayerSpec::max_pool(cur.channels, detail::parse_count(tok.substr(2), tok)));
    } else if (tok.ends_with("Softmax")) {
      auto n = detail::parse_count(tok.substr(0, tok.size() - 7), tok);
      push(LayerSpec::fully_connected(cur.size(), n));
      push(LayerSpec::softmax(n));
    } else if (tok.ends_with("FC")) {
      push(LayerSpec::fully_connected(cur.size(), detail::parse_count(tok.substr(0, tok.size() - 2), tok)));
    } else if (auto x = tok.find('x'); x != std::string_view::npos && tok.find('C', x) != std::string_view::npos) {
      auto c = tok.find('C', x);
      auto reps = detail::parse_count(tok.substr(0, x), tok);
      auto maps = detail::parse_count(tok.substr(x + 1, c - x - 1), tok);
      auto k = detail::parse_count(tok.substr(c + 1), tok);
      if (reps == 0) throw UsageError("zero repeat count in '" + std::string(tok) + "'");
      for (std::size_t r = 0; r < reps; ++r) push(LayerSpec::conv(cur.channels, maps, k));
    } else {
      throw UsageError("unrecognized architecture token '" + std::string(tok) + "'");
    }
    pos = end + 1;
  }
  return layers;
}

inline constexpr std::string_view kLeNet5Arch = "1x20C5-MP2-1x50C5-MP2-500FC-10Softmax";
inline constexpr std::string_view kCnnSmallArch = "2x128C3-MP2-2x128C3-MP2-2x256C3-256FC-10Softmax";
inline constexpr Shape3 kMnistShape{1, 28, 28};
inline constexpr Shape3 kCifarShape{3, 32, 32};

// Zero-weight model; call initialize() before training.
inline NetworkModel make_model(std::string name, std::string_view arch, const Shape3& input) {
  NetworkModel m;
  m.name = std::move(name);
  m.input = input;
  m.layers = parse_architecture(arch, input);
  for (const auto& l : m.layers) m.weights.push_back(WeightTensor::zeros(l));
  return m;
}

inline NetworkModel make_lenet5() { return make_model("lenet5", kLeNet5Arch, kMnistShape); }
inline NetworkModel make_cnn_small() { return make_model("cnn_small", kCnnSmallArch, kCifarShape); }

// Glorot-uniform weights, zero biases.
inline void initialize(NetworkModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (!l.has_weights()) continue;
    const double k2 = static_cast<double>(l.kernel_dim * l.kernel_dim);
    const double fan_in = static_cast<double>(l.in_maps) * k2;
    const double fan_out = static_cast<double>(l.out_maps) * k2;
    const float limit = static_cast<float>(std::sqrt(6.0 / (fan_in + fan_out)));
    std::uniform_real_distribution<float> dist(-limit, limit);
    auto& w = m.weights[i];
    for (auto& v : w.data) v = dist(rng);
    std::fill(w.bias.begin(), w.bias.end(), 0.0f);
  }
}

}  // namespace ikr
