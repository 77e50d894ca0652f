#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ikr/dataset.hpp"
#include "ikr/error.hpp"
#include "ikr/model.hpp"
#include "ikr/prune_config.hpp"
#include "ikr/pruning.hpp"
#include "ikr/train.hpp"

namespace ikr {

// Per-layer pruning outcome. Vectors are aligned with NetworkModel::layers;
// layers left dense have no config, an empty mask and no collections.
struct PrunedLayer {
  std::optional<LayerPruneConfig> config;
  std::vector<PatternCollection> collections;     // one per kernel set
  std::vector<std::uint32_t> pattern_indices;     // one per kernel, into its set's collection
};

struct PruneResult {
  NetworkModel model;
  LayerMasks masks;
  std::vector<PrunedLayer> layers;

  std::size_t kept_weights() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (!model.layers[i].has_weights()) continue;
      n += masks[i].empty() ? model.layers[i].weight_count()
                            : static_cast<std::size_t>(std::count(masks[i].begin(), masks[i].end(), 1));
    }
    return n;
  }
};

namespace detail {

inline KernelView<float> layer_kernels(NetworkModel& m, std::size_t layer, std::size_t k) {
  const auto& spec = m.layers[layer];
  return spec.kind == LayerKind::Conv ? conv_kernels(m.weights[layer], spec) : fc_to_kernels(m.weights[layer], k);
}

// Prunes one layer in place and records masks, collections and assignments.
inline void prune_layer(NetworkModel& m, std::size_t layer, const LayerPruneConfig& cfg, std::vector<std::uint8_t>& mask,
                        PrunedLayer& out) {
  auto view = layer_kernels(m, layer, cfg.kernel_dim);
  const std::size_t n_kernels = view.kernel_count();
  const std::size_t area = view.kernel_area();
  const auto sets = group_kernels(n_kernels, cfg.n_sets, cfg.layer);

  out.config = cfg;
  out.collections.clear();
  out.pattern_indices.assign(n_kernels, 0);
  mask.assign(view.data().size(), 0);

  std::vector<std::vector<PruningPattern>> candidates;
  for (const auto& set : sets) {
    candidates.clear();
    candidates.reserve(set.kernel_refs.size());
    for (auto kref : set.kernel_refs)
      candidates.push_back(gen_candidates(view.kernel(kref), cfg.kernel_dim, cfg.n_keep));
    auto collection = select_collection(std::span<const std::vector<PruningPattern>>(candidates), set,
                                        KernelView<const float>(view.data(), view.kernel_dim(), view.channels_per_filter()),
                                        cfg.n_pat);
    for (auto kref : set.kernel_refs) {
      auto kernel = view.kernel(kref);
      auto a = assign_pattern(kernel, collection);
      std::copy(a.masked_kernel.begin(), a.masked_kernel.end(), kernel.begin());
      out.pattern_indices[kref] = static_cast<std::uint32_t>(a.pattern_index);
      const auto& pm = collection.patterns[a.pattern_index].mask;
      std::copy(pm.begin(), pm.end(), mask.begin() + static_cast<std::ptrdiff_t>(kref * area));
    }
    out.collections.push_back(std::move(collection));
  }
}

}  // namespace detail

// Groups, generates candidates, selects collections, assigns a pattern to
// every kernel and overwrites it with the masked kernel. Layers without a
// config record stay dense. Biases are never pruned.
inline PruneResult apply_pruning(const NetworkModel& model, const PruneConfig& config) {
  validate(model);
  validate_prune_config(config, model.layers);
  PruneResult r;
  r.model = model;
  r.masks.assign(model.layers.size(), {});
  r.layers.assign(model.layers.size(), {});
  const auto weighted = model.weight_layers();
  for (std::size_t ord = 0; ord < weighted.size(); ++ord) {
    const auto* cfg = config.find(ord);
    if (!cfg) continue;
    const std::size_t li = weighted[ord];
    try {
      detail::prune_layer(r.model, li, *cfg, r.masks[li], r.layers[li]);
    } catch (const Error& e) {
      throw ConfigurationError("pruning layer " + std::to_string(ord) + ": " + e.what());
    }
  }
  return r;
}

// Analytic kept-weight count: kernels x n_keep for configured layers, all
// weights for the rest.
inline std::size_t analytic_kept_weights(const std::vector<LayerSpec>& layers, const PruneConfig& config) {
  validate_prune_config(config, layers);
  std::size_t kept = 0, ord = 0;
  for (const auto& l : layers) {
    if (!l.has_weights()) continue;
    const auto* c = config.find(ord++);
    kept += c ? kernel_count(l, c->kernel_dim) * c->n_keep : l.weight_count();
  }
  return kept;
}

struct SweepOptions {
  std::optional<std::size_t> kernel_dim;  // default: conv K, or the first of 5,4,3,2,1 dividing an FC layer
  std::size_t n_sets = 1;
  std::size_t n_pat = 8;
};

struct SensitivityPoint {
  double sparsity = 0.0;
  std::size_t n_keep = 0;
  double mcr = 0.0;
};

struct SensitivityReport {
  std::size_t layer_index = 0;
  std::vector<SensitivityPoint> points;
};

struct NpatRow {
  std::size_t n_pat = 0;
  double sparsity = 0.0;
  std::size_t n_keep = 0;
  double mcr = 0.0;
};

namespace detail {

inline std::vector<double> checked_grid(std::vector<double> grid) {
  for (double s : grid)
    if (!(s >= 0.0 && s < 1.0)) throw UsageError("sparsity " + std::to_string(s) + " outside [0, 1)");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline LayerPruneConfig sweep_layer_config(const NetworkModel& m, std::size_t ordinal, const SweepOptions& opt) {
  const auto weighted = m.weight_layers();
  if (ordinal >= weighted.size())
    throw UsageError("layer " + std::to_string(ordinal) + " out of range (" + std::to_string(weighted.size()) +
                     " weighted layers)");
  const auto& spec = m.layers[weighted[ordinal]];
  LayerPruneConfig c;
  c.layer = ordinal;
  c.n_pat = opt.n_pat;
  if (opt.kernel_dim) {
    c.kernel_dim = *opt.kernel_dim;
  } else if (spec.kind == LayerKind::Conv) {
    c.kernel_dim = spec.kernel_dim;
  } else {
    for (std::size_t k : {5, 4, 3, 2, 1})
      if (spec.weight_count() % (k * k) == 0) {
        c.kernel_dim = k;
        break;
      }
  }
  c.n_sets = std::min(opt.n_sets, kernel_count(spec, c.kernel_dim));
  return c;
}

inline std::size_t keep_for_sparsity(double s, std::size_t area) {
  const auto k = static_cast<std::size_t>(std::lround((1.0 - s) * static_cast<double>(area)));
  return std::clamp<std::size_t>(k, 1, area);
}

}  // namespace detail

// Prunes only the target layer at each sparsity (no retraining) and records
// validation MCR. The input model is not modified.
inline SensitivityReport sensitivity_sweep(const NetworkModel& model, std::size_t layer_index,
                                           std::vector<double> sparsity_grid, const Dataset& data,
                                           const SweepOptions& opt = {}) {
  const auto grid = detail::checked_grid(std::move(sparsity_grid));
  auto cfg = detail::sweep_layer_config(model, layer_index, opt);
  SensitivityReport rep;
  rep.layer_index = layer_index;
  const std::size_t area = cfg.kernel_dim * cfg.kernel_dim;
  for (double s : grid) {
    cfg.n_keep = detail::keep_for_sparsity(s, area);
    const auto pruned = apply_pruning(model, PruneConfig{{cfg}});
    rep.points.push_back({s, cfg.n_keep, evaluate(pruned.model, data)});
  }
  return rep;
}

// As sensitivity_sweep, over a grid of N_pat values (deduplicated, ascending).
inline std::vector<NpatRow> npat_sweep(const NetworkModel& model, std::size_t layer_index,
                                       std::vector<std::size_t> npat_values, std::vector<double> sparsity_grid,
                                       const Dataset& data, SweepOptions opt = {}) {
  const auto grid = detail::checked_grid(std::move(sparsity_grid));
  std::sort(npat_values.begin(), npat_values.end());
  npat_values.erase(std::unique(npat_values.begin(), npat_values.end()), npat_values.end());
  if (npat_values.empty()) throw UsageError("no N_pat values given");
  std::vector<NpatRow> rows;
  for (std::size_t np : npat_values) {
    if (np == 0) throw UsageError("N_pat must be >= 1");
    opt.n_pat = np;
    auto cfg = detail::sweep_layer_config(model, layer_index, opt);
    const std::size_t area = cfg.kernel_dim * cfg.kernel_dim;
    for (double s : grid) {
      cfg.n_keep = detail::keep_for_sparsity(s, area);
      const auto pruned = apply_pruning(model, PruneConfig{{cfg}});
      rows.push_back({np, s, cfg.n_keep, evaluate(pruned.model, data)});
    }
  }
  return rows;
}

}  // namespace ikr
