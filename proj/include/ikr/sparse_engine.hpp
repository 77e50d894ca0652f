#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ikr/csp.hpp"
#include "ikr/dataset.hpp"
#include "ikr/error.hpp"
#include "ikr/layers.hpp"
#include "ikr/model.hpp"
#include "ikr/prune_config.hpp"

namespace ikr {

// Pattern-selector emulation: for each (set, pattern) the row-major window
// offsets the multiplexers route to the N_keep multipliers. Offsets follow
// the CSP kept-weight order.
struct GatherPlan {
  std::vector<std::vector<std::vector<std::uint32_t>>> offsets;  // [set][pattern]

  std::size_t set_count() const { return offsets.size(); }
  const std::vector<std::uint32_t>& plan(std::size_t set, std::size_t pattern) const {
    if (set >= offsets.size() || pattern >= offsets[set].size())
      throw IntegrityError("no gather plan for set " + std::to_string(set) + " pattern " + std::to_string(pattern));
    return offsets[set][pattern];
  }
};

inline GatherPlan build_gather_plans(const std::vector<PatternCollection>& collections) {
  GatherPlan g;
  g.offsets.reserve(collections.size());
  for (const auto& c : collections) {
    std::vector<std::vector<std::uint32_t>> per_set;
    per_set.reserve(c.patterns.size());
    for (const auto& p : c.patterns) {
      std::vector<std::uint32_t> off;
      for (auto pos : p.positions()) off.push_back(static_cast<std::uint32_t>(pos));
      per_set.push_back(std::move(off));
    }
    g.offsets.push_back(std::move(per_set));
  }
  return g;
}

inline GatherPlan build_gather_plans(const CSPLayer& layer) { return build_gather_plans(layer.collections); }

namespace detail {

inline void check_plans(const CSPLayer& layer, const GatherPlan& plans) {
  if (plans.set_count() != layer.collections.size())
    throw IntegrityError("gather plan covers " + std::to_string(plans.set_count()) + " sets, layer has " +
                         std::to_string(layer.collections.size()));
}

}  // namespace detail

// Convolution straight from CSP storage: per output element, channels
// ascending, then plan offsets ascending, then the bias.
inline FeatureMaps csp_conv_forward(const FeatureMaps& input, const CSPLayer& layer, const GatherPlan& plans,
                                    std::size_t layer_index = 0) {
  const auto& spec = layer.spec;
  if (spec.kind != LayerKind::Conv) throw DimensionError("csp_conv_forward on a non-conv layer");
  const Shape3 out_shape = output_shape(spec, input.shape, layer_index);
  detail::check_plans(layer, plans);
  const std::size_t k = layer.kernel_dim;
  const std::size_t in_w = input.shape.width;
  const std::size_t plane = input.shape.height * in_w;

  // Window offsets translated into input-plane offsets, per kernel.
  std::vector<std::vector<std::uint32_t>> plane_off(layer.kernel_count());
  for (std::size_t n = 0; n < layer.kernel_count(); ++n) {
    const auto& offs = plans.plan(layer.set_of(n), layer.pattern_indices[n]);
    if (offs.size() != layer.n_keep) throw IntegrityError("gather plan width differs from N_keep");
    for (auto o : offs) plane_off[n].push_back(static_cast<std::uint32_t>((o / k) * in_w + o % k));
  }

  FeatureMaps out(out_shape);
  const float* in = input.data.data();
  for (std::size_t o = 0; o < spec.out_maps; ++o) {
    for (std::size_t y = 0; y < out_shape.height; ++y) {
      for (std::size_t x = 0; x < out_shape.width; ++x) {
        const std::size_t origin = y * spec.stride * in_w + x * spec.stride;
        float acc = 0.0f;
        for (std::size_t j = 0; j < spec.in_maps; ++j) {
          const std::size_t n = o * spec.in_maps + j;
          const auto& offs = plane_off[n];
          const float* w = layer.kept_weights.data() + n * layer.n_keep;
          const float* base = in + j * plane + origin;
          for (std::size_t t = 0; t < offs.size(); ++t) acc += base[offs[t]] * w[t];
        }
        out.at(o, y, x) = acc + layer.bias[o];
      }
    }
  }
  return out;
}

// FC layer from CSP storage using the virtual-kernel view: kernel n covers
// flat weights [n*K*K, (n+1)*K*K) of the row-major matrix.
inline std::vector<float> csp_fc_forward(std::span<const float> input, const CSPLayer& layer, const GatherPlan& plans) {
  const auto& spec = layer.spec;
  if (spec.kind != LayerKind::FullyConnected) throw DimensionError("csp_fc_forward on a non-FC layer");
  if (input.size() != spec.in_maps)
    throw DimensionError("csp_fc_forward: input length " + std::to_string(input.size()) + " != " +
                         std::to_string(spec.in_maps));
  detail::check_plans(layer, plans);
  const std::size_t area = layer.kernel_dim * layer.kernel_dim;
  std::vector<float> out(spec.out_maps, 0.0f);
  for (std::size_t n = 0; n < layer.kernel_count(); ++n) {
    const auto& offs = plans.plan(layer.set_of(n), layer.pattern_indices[n]);
    if (offs.size() != layer.n_keep) throw IntegrityError("gather plan width differs from N_keep");
    const float* w = layer.kept_weights.data() + n * layer.n_keep;
    for (std::size_t t = 0; t < offs.size(); ++t) {
      const std::size_t flat = n * area + offs[t];
      out[flat / spec.in_maps] += w[t] * input[flat % spec.in_maps];
    }
  }
  for (std::size_t o = 0; o < out.size(); ++o) out[o] += layer.bias[o];
  return out;
}

// Whole-network inference with pruned layers executed from CSP storage.
class SparseEngine {
public:
  explicit SparseEngine(const CSPModel& model) : model_(model), specs_(model.specs()) {
    for (const auto& l : model.layers) plans_.push_back(l.csp ? build_gather_plans(*l.csp) : GatherPlan{});
    (void)output_shape_chain();
  }

  std::vector<float> forward(std::span<const float> sample) const {
    if (sample.size() != model_.input.size()) throw DimensionError("sample size does not match model input");
    FeatureMaps cur(model_.input, std::vector<float>(sample.begin(), sample.end()));
    for (std::size_t i = 0; i < model_.layers.size(); ++i) {
      const auto& l = model_.layers[i];
      switch (l.spec.kind) {
        case LayerKind::Conv:
          cur = l.csp ? csp_conv_forward(cur, *l.csp, plans_[i], i) : conv_forward(cur, l.spec, l.dense, i);
          break;
        case LayerKind::FullyConnected: {
          auto v = l.csp ? csp_fc_forward(cur.data, *l.csp, plans_[i]) : fc_forward(cur.data, l.spec, l.dense, i);
          cur = FeatureMaps(Shape3{v.size(), 1, 1}, std::move(v));
          break;
        }
        case LayerKind::MaxPool:
          cur = max_pool_forward(cur, l.spec, nullptr, i);
          break;
        case LayerKind::Softmax:
          softmax_inplace(cur.data);
          break;
      }
      if (has_relu(specs_, i)) relu_inplace(cur.data);
    }
    return cur.data;
  }

  double evaluate(const Dataset& data) const {
    if (data.empty()) throw UsageError("cannot evaluate on an empty dataset");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.size(); ++i) wrong += argmax(forward(data.image(i))) != data.labels[i];
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.size());
  }

private:
  std::vector<Shape3> output_shape_chain() const {
    std::vector<Shape3> s{model_.input};
    for (std::size_t i = 0; i < specs_.size(); ++i) s.push_back(output_shape(specs_[i], s.back(), i));
    return s;
  }

  CSPModel model_;
  std::vector<LayerSpec> specs_;
  std::vector<GatherPlan> plans_;
};

struct LayerOps {
  std::size_t layer = 0;  // index into the layer list
  std::size_t dense_mul = 0;
  std::size_t dense_add = 0;
  std::size_t sparse_mul = 0;
  std::size_t sparse_add = 0;
};

struct OpCountReport {
  std::vector<LayerOps> layers;

  std::size_t dense_mul() const { return sum(&LayerOps::dense_mul); }
  std::size_t dense_add() const { return sum(&LayerOps::dense_add); }
  std::size_t sparse_mul() const { return sum(&LayerOps::sparse_mul); }
  std::size_t sparse_add() const { return sum(&LayerOps::sparse_add); }
  std::size_t dense_total() const { return dense_mul() + dense_add(); }
  std::size_t sparse_total() const { return sparse_mul() + sparse_add(); }
  // Sparse (mul + add) as a percentage of dense.
  double density() const {
    return dense_total() ? 100.0 * static_cast<double>(sparse_total()) / static_cast<double>(dense_total()) : 100.0;
  }

private:
  std::size_t sum(std::size_t LayerOps::*field) const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.*field;
    return n;
  }
};

// Per weighted layer: kernel size and kept weights per kernel. A dense layer
// has n_keep == kernel area.
struct LayerKeep {
  std::size_t kernel_dim = 1;
  std::size_t n_keep = 1;
};

// Multiply/add counts for one forward pass. Per output element a conv layer
// performs in_maps * n_keep multiplies and in_maps * (n_keep - 1) kernel
// adds, in_maps - 1 channel-accumulation adds and one bias add. FC layers
// count one multiply and one add per kept weight. Pooling and softmax are
// not counted.
inline OpCountReport count_ops(const std::vector<LayerSpec>& layers, const Shape3& input,
                               const std::vector<std::optional<LayerKeep>>& keep) {
  if (keep.size() != layers.size()) throw DimensionError("keep table does not match layer list");
  OpCountReport rep;
  Shape3 cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const Shape3 out = output_shape(l, cur, i);
    if (l.has_weights()) {
      LayerOps ops;
      ops.layer = i;
      if (l.kind == LayerKind::Conv) {
        const std::size_t k2 = l.kernel_dim * l.kernel_dim;
        const std::size_t nk = keep[i] ? keep[i]->n_keep : k2;
        const std::size_t positions = out.height * out.width * l.out_maps;
        ops.dense_mul = positions * l.in_maps * k2;
        ops.sparse_mul = positions * l.in_maps * nk;
        ops.dense_add = positions * (l.in_maps * (k2 - 1) + (l.in_maps - 1) + 1);
        ops.sparse_add = nk ? positions * (l.in_maps * (nk - 1) + (l.in_maps - 1) + 1) : positions;
      } else {
        ops.dense_mul = l.weight_count();
        ops.dense_add = l.weight_count();
        if (keep[i]) {
          const std::size_t k2 = keep[i]->kernel_dim * keep[i]->kernel_dim;
          const std::size_t kept = l.weight_count() / k2 * keep[i]->n_keep;
          ops.sparse_mul = kept;
          ops.sparse_add = kept;
        } else {
          ops.sparse_mul = ops.dense_mul;
          ops.sparse_add = ops.dense_add;
        }
      }
      rep.layers.push_back(ops);
    }
    cur = out;
  }
  return rep;
}

inline OpCountReport count_ops(const NetworkModel& model) {
  return count_ops(model.layers, model.input, std::vector<std::optional<LayerKeep>>(model.layers.size()));
}

inline OpCountReport count_ops(const CSPModel& model) {
  std::vector<std::optional<LayerKeep>> keep(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].csp) keep[i] = LayerKeep{model.layers[i].csp->kernel_dim, model.layers[i].csp->n_keep};
  return count_ops(model.specs(), model.input, keep);
}

inline OpCountReport count_ops(const std::vector<LayerSpec>& layers, const Shape3& input, const PruneConfig& cfg) {
  validate_prune_config(cfg, layers);
  std::vector<std::optional<LayerKeep>> keep(layers.size());
  std::size_t ord = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].has_weights()) continue;
    if (const auto* c = cfg.find(ord)) keep[i] = LayerKeep{c->kernel_dim, c->n_keep};
    ++ord;
  }
  return count_ops(layers, input, keep);
}

}  // namespace ikr
