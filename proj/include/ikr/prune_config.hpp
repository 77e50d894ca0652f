#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ikr/error.hpp"
#include "ikr/model.hpp"

namespace ikr {

// `layer` is the ordinal among the model's Conv/FC layers (0 = first
// weighted layer), matching NetworkModel::weight_layers().
struct LayerPruneConfig {
  std::size_t layer = 0;
  std::size_t kernel_dim = 0;
  std::size_t n_sets = 1;
  std::size_t n_pat = 1;
  std::size_t n_keep = 0;

  friend bool operator==(const LayerPruneConfig&, const LayerPruneConfig&) = default;
};

struct PruneConfig {
  std::vector<LayerPruneConfig> layers;

  const LayerPruneConfig* find(std::size_t ordinal) const {
    for (const auto& l : layers)
      if (l.layer == ordinal) return &l;
    return nullptr;
  }
  friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

// Built-in LeNet-5 config.
inline PruneConfig lenet5_prune_config() {
  return {{{0, 5, 2, 8, 6}, {1, 5, 10, 8, 3}, {2, 5, 10, 16, 2}, {3, 5, 5, 16, 2}}};
}

// Built-in CNN_small config.
inline PruneConfig cnn_small_prune_config() {
  return {{{0, 3, 3, 16, 6},
           {1, 3, 8, 16, 3},
           {2, 3, 8, 16, 2},
           {3, 3, 8, 16, 2},
           {4, 3, 16, 16, 2},
           {5, 3, 16, 16, 2},
           {6, 4, 8, 16, 3},
           {7, 4, 5, 16, 4}}};
}

// One record per line: `layer=<idx> K=<k> nsets=<n> npat=<p> nkeep=<q>`.
// Blank lines and text after '#' are ignored.
inline PruneConfig parse_prune_config(std::istream& in, const std::string& source = "config") {
  PruneConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string field;
    LayerPruneConfig rec;
    std::set<std::string> got;
    while (ls >> field) {
      const auto eq = field.find('=');
      auto where = [&] { return source + ":" + std::to_string(lineno); };
      if (eq == std::string::npos) throw UsageError(where() + ": expected key=value, got '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      std::size_t v = 0;
      try {
        std::size_t used = 0;
        const long long parsed = std::stoll(val, &used);
        if (used != val.size() || parsed < 0) throw std::invalid_argument(val);
        v = static_cast<std::size_t>(parsed);
      } catch (const std::exception&) {
        throw UsageError(where() + ": '" + key + "' needs a non-negative integer, got '" + val + "'");
      }
      if (!got.insert(key).second) throw UsageError(where() + ": duplicate key '" + key + "'");
      if (key == "layer") rec.layer = v;
      else if (key == "K") rec.kernel_dim = v;
      else if (key == "nsets") rec.n_sets = v;
      else if (key == "npat") rec.n_pat = v;
      else if (key == "nkeep") rec.n_keep = v;
      else throw UsageError(where() + ": unknown key '" + key + "'");
    }
    if (got.empty()) continue;
    for (const char* k : {"layer", "K", "nsets", "npat", "nkeep"})
      if (!got.count(k))
        throw UsageError(source + ":" + std::to_string(lineno) + ": missing key '" + k + "'");
    if (!seen.insert(rec.layer).second)
      throw UsageError(source + ":" + std::to_string(lineno) + ": layer " + std::to_string(rec.layer) +
                       " configured twice");
    cfg.layers.push_back(rec);
  }
  return cfg;
}

inline PruneConfig parse_prune_config(const std::string& text) {
  std::istringstream in(text);
  return parse_prune_config(in);
}

inline PruneConfig load_prune_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open prune config " + p.string());
  return parse_prune_config(in, p.string());
}

inline std::string format_prune_config(const PruneConfig& cfg) {
  std::ostringstream os;
  for (const auto& l : cfg.layers)
    os << "layer=" << l.layer << " K=" << l.kernel_dim << " nsets=" << l.n_sets << " npat=" << l.n_pat
       << " nkeep=" << l.n_keep << "\n";
  return os.str();
}

// Number of K x K kernels the layer splits into under this config.
inline std::size_t kernel_count(const LayerSpec& spec, std::size_t kernel_dim) {
  if (spec.kind == LayerKind::Conv) return spec.out_maps * spec.in_maps;
  return spec.weight_count() / (kernel_dim * kernel_dim);
}

// Checks every record against the architecture: layer exists, conv kernel
// sizes agree, FC sizes divide into K*K kernels, n_keep <= K*K, n_sets fits.
inline void validate_prune_config(const PruneConfig& cfg, const std::vector<LayerSpec>& layers) {
  std::vector<std::size_t> weighted;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].has_weights()) weighted.push_back(i);
  for (const auto& c : cfg.layers) {
    const std::string ctx = "prune config layer " + std::to_string(c.layer);
    if (c.layer >= weighted.size())
      throw ConfigurationError(ctx + ": model has only " + std::to_string(weighted.size()) + " weighted layers");
    const auto& spec = layers[weighted[c.layer]];
    if (c.kernel_dim == 0) throw ConfigurationError(ctx + ": K must be positive");
    if (spec.kind == LayerKind::Conv && c.kernel_dim != spec.kernel_dim)
      throw ConfigurationError(ctx + ": K=" + std::to_string(c.kernel_dim) + " but conv kernels are " +
                               std::to_string(spec.kernel_dim) + "x" + std::to_string(spec.kernel_dim));
    const std::size_t area = c.kernel_dim * c.kernel_dim;
    if (spec.kind == LayerKind::FullyConnected && spec.weight_count() % area != 0)
      throw ConfigurationError(ctx + ": FC weight count " + std::to_string(spec.weight_count()) +
                               " not divisible by " + std::to_string(area) + " (remainder " +
                               std::to_string(spec.weight_count() % area) + ")");
    if (c.n_keep > area) throw ConfigurationError(ctx + ": nkeep exceeds K*K");
    if (c.n_pat == 0) throw ConfigurationError(ctx + ": npat must be >= 1");
    if (c.n_sets == 0 || c.n_sets > kernel_count(spec, c.kernel_dim))
      throw ConfigurationError(ctx + ": nsets must be in [1, kernel count]");
  }
}

}  // namespace ikr
