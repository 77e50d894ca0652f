#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ikr/dataset.hpp"
#include "ikr/error.hpp"
#include "ikr/model.hpp"
#include "ikr/network.hpp"

namespace ikr {

enum class Optimizer { SGD, Adam };

struct EpochStats {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
};

struct TrainHyper {
  Optimizer optimizer = Optimizer::Adam;
  // (epochs, rate) phases run back to back.
  std::vector<std::pair<std::size_t, double>> schedule{{1, 1e-3}};
  std::size_t batch_size = 128;
  float dropout_keep = 0.5f;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::function<void(const EpochStats&)> on_epoch;

  std::size_t total_epochs() const {
    std::size_t n = 0;
    for (const auto& [e, r] : schedule) n += e;
    return n;
  }

  void validate() const {
    if (schedule.empty()) throw UsageError("learning rate schedule is empty");
    for (const auto& [e, r] : schedule)
      if (!(r >= 0.0) || !std::isfinite(r)) throw UsageError("learning rates must be finite and non-negative");
    if (batch_size == 0) throw UsageError("batch size must be at least 1");
    if (!(dropout_keep > 0.0f && dropout_keep <= 1.0f)) throw UsageError("dropout keep probability must be in (0, 1]");
  }
};

// One binary mask per layer, aligned with NetworkModel::layers. An empty
// entry means the layer is unconstrained.
using LayerMasks = std::vector<std::vector<std::uint8_t>>;

namespace detail {

struct OptimizerState {
  std::vector<WeightTensor> m;
  std::vector<WeightTensor> v;
  std::size_t step = 0;
};

inline void apply_update(NetworkModel& model, const Gradients& g, OptimizerState& st, const TrainHyper& h,
                         double lr) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
  auto update = [&](std::vector<float>& w, const std::vector<float>& gr, std::vector<float>& m,
                    std::vector<float>& v) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (h.optimizer == Optimizer::Adam) {
        m[j] = static_cast<float>(h.beta1 * m[j] + (1.0 - h.beta1) * gr[j]);
        v[j] = static_cast<float>(h.beta2 * v[j] + (1.0 - h.beta2) * static_cast<double>(gr[j]) * gr[j]);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + h.epsilon));
      } else {
        m[j] = static_cast<float>(h.momentum * m[j] + gr[j]);
        w[j] -= static_cast<float>(lr * m[j]);
      }
    }
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].has_weights()) continue;
    update(model.weights[i].data, g.layers[i].data, st.m[i].data, st.v[i].data);
    update(model.weights[i].bias, g.layers[i].bias, st.m[i].bias, st.v[i].bias);
  }
}

inline void check_masks(const NetworkModel& model, const LayerMasks& masks) {
  if (masks.size() != model.layers.size())
    throw DimensionError("mask list has " + std::to_string(masks.size()) + " entries for " +
                         std::to_string(model.layers.size()) + " layers");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].empty()) continue;
    if (masks[i].size() != model.weights[i].data.size())
      throw DimensionError("layer " + std::to_string(i) + ": mask holds " + std::to_string(masks[i].size()) +
                           " entries, weights hold " + std::to_string(model.weights[i].data.size()));
    for (std::size_t j = 0; j < masks[i].size(); ++j)
      if (!masks[i][j] && model.weights[i].data[j] != 0.0f)
        throw IntegrityError("layer " + std::to_string(i) + ": weight " + std::to_string(j) +
                             " is masked but nonzero");
  }
}

// ReLU maps NaN to zero, so a blown-up layer can still yield a finite loss.
inline bool gradients_finite(const Gradients& g) {
  for (const auto& l : g.layers) {
    float acc = 0.0f;
    for (float x : l.data) acc += x * 0.0f;
    for (float x : l.bias) acc += x * 0.0f;
    if (acc != 0.0f) return false;
  }
  return true;
}

inline NetworkModel fit(NetworkModel model, const Dataset& data, const TrainHyper& hyper, std::uint64_t seed,
                        const LayerMasks* masks) {
  hyper.validate();
  validate(model);
  data.validate();
  if (data.empty()) throw UsageError("training set is empty");
  if (data.image_shape != model.input)
    throw DimensionError("dataset images are " + to_string(data.image_shape) + ", model expects " +
                         to_string(model.input));
  if (data.num_classes != model.num_classes())
    throw DimensionError("dataset has " + std::to_string(data.num_classes) + " classes, model outputs " +
                         std::to_string(model.num_classes()));
  if (masks) check_masks(model, *masks);

  OptimizerState st;
  for (const auto& l : model.layers) {
    st.m.push_back(WeightTensor::zeros(l));
    st.v.push_back(WeightTensor::zeros(l));
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::vector<float> batch_images;
  std::vector<std::uint16_t> batch_labels;
  BatchActivations acts;
  const std::size_t sample = data.image_shape.size();
  std::size_t epoch = 0;

  for (const auto& [epochs, lr] : hyper.schedule) {
    for (std::size_t e = 0; e < epochs; ++e, ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      std::size_t n_batches = 0;
      for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
        const std::size_t bsz = std::min(hyper.batch_size, order.size() - start);
        batch_images.resize(bsz * sample);
        batch_labels.resize(bsz);
        for (std::size_t b = 0; b < bsz; ++b) {
          auto img = data.image(order[start + b]);
          std::copy(img.begin(), img.end(), batch_images.begin() + static_cast<std::ptrdiff_t>(b * sample));
          batch_labels[b] = data.labels[order[start + b]];
        }
        forward_batch(model, batch_images, bsz, acts, DropoutContext{hyper.dropout_keep, &rng});
        Gradients g = backward_batch(model, acts, batch_labels);
        if (!std::isfinite(g.loss) || !gradients_finite(g))
          throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(n_batches));
        if (masks) {
          for (std::size_t i = 0; i < masks->size(); ++i) {
            const auto& mk = (*masks)[i];
            for (std::size_t j = 0; j < mk.size(); ++j)
              if (!mk[j]) g.layers[i].data[j] = 0.0f;
          }
        }
        if (lr > 0.0) apply_update(model, g, st, hyper, lr);
        loss_sum += g.loss;
        ++n_batches;
      }
      if (hyper.on_epoch) hyper.on_epoch({epoch, lr, loss_sum / static_cast<double>(n_batches)});
    }
  }
  return model;
}

}  // namespace detail

// Mini-batch training with softmax cross-entropy. Deterministic given seed.
inline NetworkModel train(NetworkModel model, const Dataset& data, const TrainHyper& hyper, std::uint64_t seed) {
  return detail::fit(std::move(model), data, hyper, seed, nullptr);
}

// As train(), but gradients at masked positions are zeroed every step so
// pruned weights stay exactly zero.
inline NetworkModel retrain_masked(NetworkModel model, const LayerMasks& masks, const Dataset& data,
                                   const TrainHyper& hyper, std::uint64_t seed) {
  return detail::fit(std::move(model), data, hyper, seed, &masks);
}

inline std::vector<std::size_t> predict_classes(const NetworkModel& model, const Dataset& data,
                                                std::size_t batch_size = 256) {
  std::vector<std::size_t> out(data.size());
  BatchActivations acts;
  const std::size_t sample = data.image_shape.size();
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t bsz = std::min(batch_size, data.size() - start);
    std::span<const float> in(data.images.data() + start * sample, bsz * sample);
    forward_batch(model, in, bsz, acts);
    for (std::size_t b = 0; b < bsz; ++b) out[start + b] = argmax(acts.output(b));
  }
  return out;
}

// Misclassification rate in percent.
inline double evaluate(const NetworkModel& model, const Dataset& data) {
  if (data.empty()) throw UsageError("cannot evaluate on an empty dataset");
  if (data.num_classes != model.num_classes())
    throw DimensionError("dataset has " + std::to_string(data.num_classes) + " classes, model outputs " +
                         std::to_string(model.num_classes()));
  if (data.image_shape != model.input)
    throw DimensionError("dataset images are " + to_string(data.image_shape) + ", model expects " +
                         to_string(model.input));
  const auto pred = predict_classes(model, data);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != data.labels[i];
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace ikr
