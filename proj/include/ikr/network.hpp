#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ikr/layers.hpp"
#include "ikr/model.hpp"

namespace ikr {

// Per-layer activations for a batch of samples, each stored contiguously.
// values[i] is the input to layer i; values.back() is the network output.
struct BatchActivations {
  std::size_t batch = 0;
  std::vector<Shape3> shapes;
  std::vector<std::vector<float>> values;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<float>> dropout_scale;

  std::span<const float> output(std::size_t sample) const {
    const std::size_t n = shapes.back().size();
    return {values.back().data() + sample * n, n};
  }
};

// Dropout after every max-pool layer, inverted scaling. Only used in training.
struct DropoutContext {
  float keep = 1.0f;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && keep < 1.0f; }
};

namespace detail {

inline void forward_conv_batch(const LayerSpec& spec, const WeightTensor& w, const Shape3& in_shape,
                               const Shape3& out_shape, const float* in, float* out, std::size_t batch,
                               std::vector<float>& cols) {
  const std::size_t k = spec.kernel_dim;
  const std::size_t patch = spec.in_maps * k * k;
  const std::size_t n_out = out_shape.height * out_shape.width;
  cols.resize(patch * n_out);
  ConstMatrixMap wm(w.data.data(), spec.out_maps, patch);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(in + b * in_shape.size(), in_shape, k, spec.stride, out_shape.height, out_shape.width, cols.data());
    ConstMatrixMap cm(cols.data(), patch, n_out);
    MatrixMap om(out + b * out_shape.size(), spec.out_maps, n_out);
    om.noalias() = wm * cm;
    for (std::size_t o = 0; o < spec.out_maps; ++o) om.row(o).array() += w.bias[o];
  }
}

inline void forward_fc_batch(const LayerSpec& spec, const WeightTensor& w, const float* in, float* out,
                             std::size_t batch) {
  ConstMatrixMap wm(w.data.data(), spec.out_maps, spec.in_maps);
  ConstMatrixMap xm(in, batch, spec.in_maps);
  MatrixMap ym(out, batch, spec.out_maps);
  ym.noalias() = xm * wm.transpose();
  Eigen::Map<const Eigen::RowVectorXf> bias(w.bias.data(), static_cast<Eigen::Index>(spec.out_maps));
  ym.rowwise() += bias;
}

}  // namespace detail

// Runs `batch` samples laid out back to back in `inputs`.
inline void forward_batch(const NetworkModel& model, std::span<const float> inputs, std::size_t batch,
                          BatchActivations& acts, const DropoutContext& dropout = {}) {
  const std::size_t n_layers = model.layers.size();
  acts.batch = batch;
  acts.shapes = layer_shapes(model);
  if (inputs.size() != batch * model.input.size())
    throw DimensionError("input batch holds " + std::to_string(inputs.size()) + " values, expected " +
                         std::to_string(batch * model.input.size()));
  acts.values.resize(n_layers + 1);
  acts.pool_argmax.resize(n_layers);
  acts.dropout_scale.resize(n_layers);
  acts.values[0].assign(inputs.begin(), inputs.end());

  std::vector<float> cols;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& spec = model.layers[i];
    const Shape3& in_shape = acts.shapes[i];
    const Shape3& out_shape = acts.shapes[i + 1];
    const float* in = acts.values[i].data();
    auto& out = acts.values[i + 1];
    out.resize(batch * out_shape.size());

    switch (spec.kind) {
      case LayerKind::Conv:
        detail::check_weights(spec, model.weights[i], i);
        detail::forward_conv_batch(spec, model.weights[i], in_shape, out_shape, in, out.data(), batch, cols);
        break;
      case LayerKind::FullyConnected:
        detail::check_weights(spec, model.weights[i], i);
        detail::forward_fc_batch(spec, model.weights[i], in, out.data(), batch);
        break;
      case LayerKind::MaxPool: {
        auto& arg = acts.pool_argmax[i];
        arg.resize(batch * out_shape.size());
        std::vector<std::uint32_t> local;
        for (std::size_t b = 0; b < batch; ++b) {
          FeatureMaps fm(in_shape, std::vector<float>(in + b * in_shape.size(), in + (b + 1) * in_shape.size()));
          FeatureMaps pooled = max_pool_forward(fm, spec, &local, i);
          std::copy(pooled.data.begin(), pooled.data.end(), out.begin() + static_cast<std::ptrdiff_t>(b * out_shape.size()));
          std::copy(local.begin(), local.end(), arg.begin() + static_cast<std::ptrdiff_t>(b * out_shape.size()));
        }
        auto& scale = acts.dropout_scale[i];
        if (dropout.active()) {
          std::bernoulli_distribution keep(dropout.keep);
          const float inv = 1.0f / dropout.keep;
          scale.resize(out.size());
          for (std::size_t j = 0; j < out.size(); ++j) {
            scale[j] = keep(*dropout.rng) ? inv : 0.0f;
            out[j] *= scale[j];
          }
        } else {
          scale.clear();
        }
        break;
      }
      case LayerKind::Softmax: {
        std::copy(in, in + batch * in_shape.size(), out.begin());
        for (std::size_t b = 0; b < batch; ++b)
          softmax_inplace(std::span<float>(out.data() + b * out_shape.size(), out_shape.size()));
        break;
      }
    }
    if (has_relu(model, i)) relu_inplace(out);
  }
}

inline std::vector<float> predict(const NetworkModel& model, std::span<const float> sample) {
  BatchActivations acts;
  forward_batch(model, sample, 1, acts);
  return acts.values.back();
}

struct Gradients {
  std::vector<WeightTensor> layers;  // aligned with model.layers
  double loss = 0.0;                // mean cross-entropy over the batch
};

inline Gradients zero_gradients(const NetworkModel& model) {
  Gradients g;
  for (const auto& l : model.layers) g.layers.push_back(WeightTensor::zeros(l));
  return g;
}

// Mean softmax cross-entropy over the batch and its gradient w.r.t. every
// weight and bias. The last layer must be Softmax. Samples are reduced in
// index order so results are reproducible.
inline Gradients backward_batch(const NetworkModel& model, const BatchActivations& acts,
                                std::span<const std::uint16_t> labels) {
  const std::size_t n_layers = model.layers.size();
  if (n_layers == 0 || model.layers.back().kind != LayerKind::Softmax)
    throw DimensionError("training requires a trailing Softmax layer");
  const std::size_t batch = acts.batch;
  if (labels.size() != batch) throw DimensionError("label count does not match batch size");
  const std::size_t classes = model.layers.back().out_maps;

  Gradients g = zero_gradients(model);
  const float inv_batch = 1.0f / static_cast<float>(batch);

  // dL/dlogits = (p - onehot) / batch
  std::vector<float> delta(acts.values.back());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t y = labels[b];
    if (y >= classes) throw DataError("label " + std::to_string(y) + " out of range");
    const float* logits = acts.values[n_layers - 1].data() + b * classes;
    const float mx = *std::max_element(logits, logits + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(logits[c] - mx));
    loss += -(static_cast<double>(logits[y] - mx) - std::log(sum));
    delta[b * classes + y] -= 1.0f;
  }
  for (auto& d : delta) d *= inv_batch;
  g.loss = loss / static_cast<double>(batch);

  std::vector<float> cols, dcols, grad_in;
  for (std::size_t li = n_layers - 1; li-- > 0;) {
    const auto& spec = model.layers[li];
    const Shape3& in_shape = acts.shapes[li];
    const Shape3& out_shape = acts.shapes[li + 1];
    const float* x = acts.values[li].data();
    const float* y = acts.values[li + 1].data();
    const bool need_input_grad = li > 0;

    if (has_relu(model, li))
      for (std::size_t j = 0; j < delta.size(); ++j)
        if (!(y[j] > 0.0f)) delta[j] = 0.0f;

    grad_in.assign(need_input_grad ? batch * in_shape.size() : 0, 0.0f);
    switch (spec.kind) {
      case LayerKind::FullyConnected: {
        const auto& w = model.weights[li];
        auto& gw = g.layers[li];
        ConstMatrixMap dy(delta.data(), batch, spec.out_maps);
        ConstMatrixMap xm(x, batch, spec.in_maps);
        MatrixMap dw(gw.data.data(), spec.out_maps, spec.in_maps);
        dw.noalias() = dy.transpose() * xm;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < spec.out_maps; ++o) gw.bias[o] += delta[b * spec.out_maps + o];
        if (need_input_grad) {
          ConstMatrixMap wm(w.data.data(), spec.out_maps, spec.in_maps);
          MatrixMap dx(grad_in.data(), batch, spec.in_maps);
          dx.noalias() = dy * wm;
        }
        break;
      }
      case LayerKind::Conv: {
        const auto& w = model.weights[li];
        auto& gw = g.layers[li];
        const std::size_t k = spec.kernel_dim;
        const std::size_t patch = spec.in_maps * k * k;
        const std::size_t n_out = out_shape.height * out_shape.width;
        cols.resize(patch * n_out);
        dcols.resize(patch * n_out);
        ConstMatrixMap wm(w.data.data(), spec.out_maps, patch);
        MatrixMap dw(gw.data.data(), spec.out_maps, patch);
        for (std::size_t b = 0; b < batch; ++b) {
          detail::im2col(x + b * in_shape.size(), in_shape, k, spec.stride, out_shape.height, out_shape.width,
                         cols.data());
          ConstMatrixMap cm(cols.data(), patch, n_out);
          ConstMatrixMap dy(delta.data() + b * out_shape.size(), spec.out_maps, n_out);
          dw.noalias() += dy * cm.transpose();
          for (std::size_t o = 0; o < spec.out_maps; ++o) {
            const float* row = delta.data() + b * out_shape.size() + o * n_out;
            float acc = 0.0f;  // fixed order: Eigen's redux order depends on buffer alignment
            for (std::size_t t = 0; t < n_out; ++t) acc += row[t];
            gw.bias[o] += acc;
          }
          if (need_input_grad) {
            MatrixMap dc(dcols.data(), patch, n_out);
            dc.noalias() = wm.transpose() * dy;
            detail::col2im(dcols.data(), in_shape, k, spec.stride, out_shape.height, out_shape.width,
                           grad_in.data() + b * in_shape.size());
          }
        }
        break;
      }
      case LayerKind::MaxPool: {
        const auto& arg = acts.pool_argmax[li];
        const auto& scale = acts.dropout_scale[li];
        if (need_input_grad) {
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < out_shape.size(); ++j) {
              const std::size_t o = b * out_shape.size() + j;
              const float d = scale.empty() ? delta[o] : delta[o] * scale[o];
              grad_in[b * in_shape.size() + arg[o]] += d;
            }
          }
        }
        break;
      }
      case LayerKind::Softmax:
        throw DimensionError("Softmax is only supported as the final layer");
    }
    delta.swap(grad_in);
  }
  return g;
}

}  // namespace ikr
