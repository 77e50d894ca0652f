#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ikr/error.hpp"
#include "ikr/model.hpp"

namespace ikr {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct FeatureMaps {
  Shape3 shape;
  std::vector<float> data;

  FeatureMaps() = default;
  explicit FeatureMaps(Shape3 s) : shape(s), data(s.size(), 0.0f) {}
  FeatureMaps(Shape3 s, std::vector<float> d) : shape(s), data(std::move(d)) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape.height + y) * shape.width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape.height + y) * shape.width + x];
  }
};

namespace detail {

// Unfolds one CHW sample into a (C*K*K) x (OH*OW) matrix.
inline void im2col(const float* in, const Shape3& s, std::size_t k, std::size_t stride,
                   std::size_t oh, std::size_t ow, float* cols) {
  const std::size_t n_out = oh * ow;
  for (std::size_t c = 0; c < s.channels; ++c) {
    const float* plane = in + c * s.height * s.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* row = cols + ((c * k + ky) * k + kx) * n_out;
        for (std::size_t y = 0; y < oh; ++y) {
          const float* src = plane + (y * stride + ky) * s.width + kx;
          float* dst = row + y * ow;
          if (stride == 1) {
            std::copy(src, src + ow, dst);
          } else {
            for (std::size_t x = 0; x < ow; ++x) dst[x] = src[x * stride];
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into `in`.
inline void col2im(const float* cols, const Shape3& s, std::size_t k, std::size_t stride,
                   std::size_t oh, std::size_t ow, float* in) {
  const std::size_t n_out = oh * ow;
  for (std::size_t c = 0; c < s.channels; ++c) {
    float* plane = in + c * s.height * s.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* row = cols + ((c * k + ky) * k + kx) * n_out;
        for (std::size_t y = 0; y < oh; ++y) {
          float* dst = plane + (y * stride + ky) * s.width + kx;
          const float* src = row + y * ow;
          for (std::size_t x = 0; x < ow; ++x) dst[x * stride] += src[x];
        }
      }
    }
  }
}

inline void check_weights(const LayerSpec& spec, const WeightTensor& w, std::size_t layer_index) {
  if (w.data.size() != spec.weight_count() || w.bias.size() != spec.out_maps)
    throw DimensionError("layer " + std::to_string(layer_index) + ": weight tensor does not match layer spec");
}

}  // namespace detail

// Valid (unpadded) convolution: out_i = sum_j in_j * W_ij + b_i.
inline FeatureMaps conv_forward(const FeatureMaps& input, const LayerSpec& spec, const WeightTensor& w,
                                std::size_t layer_index = 0) {
  if (spec.kind != LayerKind::Conv)
    throw DimensionError("layer " + std::to_string(layer_index) + ": not a conv layer");
  if (input.data.size() != input.shape.size())
    throw DimensionError("layer " + std::to_string(layer_index) + ": feature map buffer size mismatch");
  const Shape3 out_shape = output_shape(spec, input.shape, layer_index);
  detail::check_weights(spec, w, layer_index);

  const std::size_t k = spec.kernel_dim;
  const std::size_t patch = spec.in_maps * k * k;
  const std::size_t n_out = out_shape.height * out_shape.width;
  std::vector<float> cols(patch * n_out);
  detail::im2col(input.data.data(), input.shape, k, spec.stride, out_shape.height, out_shape.width, cols.data());

  FeatureMaps out(out_shape);
  ConstMatrixMap wm(w.data.data(), spec.out_maps, patch);
  ConstMatrixMap cm(cols.data(), patch, n_out);
  MatrixMap om(out.data.data(), spec.out_maps, n_out);
  om.noalias() = wm * cm;
  for (std::size_t o = 0; o < spec.out_maps; ++o) om.row(o).array() += w.bias[o];
  return out;
}

// out = W * in + b.
inline std::vector<float> fc_forward(std::span<const float> input, const LayerSpec& spec, const WeightTensor& w,
                                     std::size_t layer_index = 0) {
  if (spec.kind != LayerKind::FullyConnected)
    throw DimensionError("layer " + std::to_string(layer_index) + ": not a fully connected layer");
  if (input.size() != spec.in_maps)
    throw DimensionError("layer " + std::to_string(layer_index) + ": input length " +
                         std::to_string(input.size()) + " != " + std::to_string(spec.in_maps));
  detail::check_weights(spec, w, layer_index);
  std::vector<float> out(w.bias);
  ConstMatrixMap wm(w.data.data(), spec.out_maps, spec.in_maps);
  Eigen::Map<const Eigen::VectorXf> x(input.data(), static_cast<Eigen::Index>(input.size()));
  Eigen::Map<Eigen::VectorXf> y(out.data(), static_cast<Eigen::Index>(out.size()));
  y.noalias() += wm * x;
  return out;
}

// Returns the pooled maps; `argmax` (optional) receives the flat input index
// of each selected element. Ties resolve to the first element in scan order.
inline FeatureMaps max_pool_forward(const FeatureMaps& input, const LayerSpec& spec,
                                    std::vector<std::uint32_t>* argmax = nullptr,
                                    std::size_t layer_index = 0) {
  const Shape3 out_shape = output_shape(spec, input.shape, layer_index);
  FeatureMaps out(out_shape);
  if (argmax) argmax->assign(out_shape.size(), 0);
  const std::size_t p = spec.pool_dim;
  std::size_t o = 0;
  for (std::size_t c = 0; c < out_shape.channels; ++c) {
    for (std::size_t y = 0; y < out_shape.height; ++y) {
      for (std::size_t x = 0; x < out_shape.width; ++x, ++o) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < p; ++dy) {
          for (std::size_t dx = 0; dx < p; ++dx) {
            const std::size_t idx = (c * input.shape.height + y * spec.stride + dy) * input.shape.width +
                                    x * spec.stride + dx;
            if (input.data[idx] > best || (dy == 0 && dx == 0)) {
              best = input.data[idx];
              best_idx = idx;
            }
          }
        }
        out.data[o] = best;
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  return out;
}

inline void softmax_inplace(std::span<float> v) {
  if (v.empty()) return;
  const float mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (auto& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (auto& x : v) x *= inv;
}

inline std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

inline void relu_inplace(std::span<float> v) {
  for (auto& x : v) x = x > 0.0f ? x : 0.0f;
}

// Index of the largest element; the lowest index wins ties.
inline std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace ikr
