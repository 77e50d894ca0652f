#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ikr/bytes.hpp"
#include "ikr/error.hpp"
#include "ikr/model.hpp"
#include "ikr/model_io.hpp"
#include "ikr/prune.hpp"
#include "ikr/pruning.hpp"

namespace ikr {

// Bits needed to address n_pat patterns: ceil(log2 n_pat).
inline std::size_t index_bits(std::size_t n_pat) {
  return n_pat <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(n_pat - 1));
}

struct CSPKernel {
  std::uint32_t pattern_index = 0;
  std::span<const float> kept_weights;
};

// One pruned layer in Compressed Sparse Pattern form. Kernels are stored
// filter-major; kept weights follow the row-major order of the pattern's
// one-positions.
struct CSPLayer {
  LayerSpec spec;
  std::size_t kernel_dim = 0;
  std::size_t n_sets = 0;
  std::size_t n_pat = 0;
  std::size_t n_keep = 0;
  std::vector<PatternCollection> collections;   // per set
  std::vector<std::uint32_t> pattern_indices;   // per kernel
  std::vector<float> kept_weights;              // kernel_count * n_keep
  std::vector<float> bias;

  std::size_t kernel_count() const { return pattern_indices.size(); }
  std::size_t set_of(std::size_t kernel) const { return set_of_kernel(kernel, kernel_count(), n_sets); }
  CSPKernel kernel(std::size_t n) const {
    return {pattern_indices[n], std::span<const float>(kept_weights).subspan(n * n_keep, n_keep)};
  }
  const PruningPattern& pattern_of(std::size_t n) const {
    return collections[set_of(n)].patterns[pattern_indices[n]];
  }
};

struct CSPModelLayer {
  LayerSpec spec;
  std::optional<CSPLayer> csp;  // set for pruned layers
  WeightTensor dense;           // weights of unpruned Conv/FC layers
};

struct CSPModel {
  std::string name;
  Shape3 input;
  std::vector<CSPModelLayer> layers;

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> s;
    for (const auto& l : layers) s.push_back(l.spec);
    return s;
  }
};

// Structural checks: kernel count matches the dense layer, set/collection
// counts agree, every referenced pattern exists and keeps n_keep weights.
inline void validate(const CSPLayer& l) {
  const std::size_t area = l.kernel_dim * l.kernel_dim;
  const std::size_t expected = kernel_count(l.spec, l.kernel_dim);
  if (l.kernel_count() != expected)
    throw IntegrityError("CSP layer holds " + std::to_string(l.kernel_count()) + " kernels, dense layer has " +
                         std::to_string(expected));
  if (l.n_sets == 0 || l.collections.size() != l.n_sets)
    throw IntegrityError("CSP layer has " + std::to_string(l.collections.size()) + " dictionaries for " +
                         std::to_string(l.n_sets) + " sets");
  if (l.kept_weights.size() != l.kernel_count() * l.n_keep)
    throw IntegrityError("CSP kept-weight stream length mismatch");
  if (l.bias.size() != l.spec.out_maps) throw IntegrityError("CSP bias length mismatch");
  for (const auto& c : l.collections) {
    if (c.patterns.empty() || c.patterns.size() > l.n_pat)
      throw IntegrityError("CSP dictionary size " + std::to_string(c.patterns.size()) + " outside [1, " +
                           std::to_string(l.n_pat) + "]");
    for (const auto& p : c.patterns)
      if (p.kernel_dim != l.kernel_dim || p.mask.size() != area || p.keep_count != l.n_keep)
        throw IntegrityError("CSP dictionary pattern does not match layer geometry");
  }
  for (std::size_t n = 0; n < l.kernel_count(); ++n)
    if (l.pattern_indices[n] >= l.collections[l.set_of(n)].size())
      throw IntegrityError("CSP kernel " + std::to_string(n) + ": pattern index " +
                           std::to_string(l.pattern_indices[n]) + " outside its dictionary (corrupt data)");
}

// Encodes one pruned layer. Each kernel's mask must match exactly one
// pattern of its set's collection and its weights must be zero elsewhere.
inline CSPLayer encode(const LayerSpec& spec, const WeightTensor& weights, std::span<const std::uint8_t> mask,
                       const std::vector<PatternCollection>& collections, const LayerPruneConfig& cfg) {
  if (!spec.has_weights()) throw UsageError("only Conv/FC layers can be CSP-encoded");
  if (weights.data.size() != spec.weight_count() || mask.size() != weights.data.size())
    throw DimensionError("encode: weights/mask size does not match layer");
  KernelView<const float> view = spec.kind == LayerKind::Conv ? conv_kernels(weights, spec)
                                                              : fc_to_kernels(weights, cfg.kernel_dim);
  CSPLayer out;
  out.spec = spec;
  out.kernel_dim = cfg.kernel_dim;
  out.n_sets = cfg.n_sets;
  out.n_pat = cfg.n_pat;
  out.n_keep = cfg.n_keep;
  out.collections = collections;
  out.bias = weights.bias;
  const std::size_t n_kernels = view.kernel_count();
  const std::size_t area = view.kernel_area();
  if (collections.size() != cfg.n_sets)
    throw IntegrityError("encode: " + std::to_string(collections.size()) + " collections for " +
                         std::to_string(cfg.n_sets) + " sets");
  out.pattern_indices.resize(n_kernels);
  out.kept_weights.reserve(n_kernels * cfg.n_keep);

  for (std::size_t n = 0; n < n_kernels; ++n) {
    const auto set = set_of_kernel(n, n_kernels, cfg.n_sets);
    const auto kmask = mask.subspan(n * area, area);
    const auto kw = view.kernel(n);
    auto coords = [&] {
      const auto c = kernel_coordinates(view, n, spec.kind == LayerKind::FullyConnected ? spec.in_maps : 0);
      return "(" + std::to_string(c.filter) + ", " + std::to_string(c.channel) + ")";
    };
    std::optional<std::size_t> found;
    const auto& pats = collections[set].patterns;
    for (std::size_t p = 0; p < pats.size() && !found; ++p)
      if (std::equal(kmask.begin(), kmask.end(), pats[p].mask.begin(), pats[p].mask.end())) found = p;
    if (!found) throw IntegrityError("encode: kernel " + coords() + " matches no pattern of set " + std::to_string(set));
    for (std::size_t j = 0; j < area; ++j) {
      if (kmask[j]) out.kept_weights.push_back(kw[j]);
      else if (kw[j] != 0.0f)
        throw IntegrityError("encode: kernel " + coords() + " has a nonzero weight outside its pattern");
    }
    out.pattern_indices[n] = static_cast<std::uint32_t>(*found);
  }
  validate(out);
  return out;
}

// Scatters kept weights into their pattern positions; zeros elsewhere.
inline WeightTensor decode(const CSPLayer& layer) {
  validate(layer);
  WeightTensor w = WeightTensor::zeros(layer.spec);
  w.bias = layer.bias;
  const std::size_t area = layer.kernel_dim * layer.kernel_dim;
  for (std::size_t n = 0; n < layer.kernel_count(); ++n) {
    const auto k = layer.kernel(n);
    const auto& pat = layer.pattern_of(n);
    std::size_t t = 0;
    for (std::size_t j = 0; j < area; ++j)
      if (pat.mask[j]) w.data[n * area + j] = k.kept_weights[t++];
  }
  return w;
}

inline CSPModel encode_model(const PruneResult& pr) {
  CSPModel m;
  m.name = pr.model.name;
  m.input = pr.model.input;
  for (std::size_t i = 0; i < pr.model.layers.size(); ++i) {
    CSPModelLayer l;
    l.spec = pr.model.layers[i];
    if (pr.layers[i].config) {
      l.csp = encode(l.spec, pr.model.weights[i], pr.masks[i], pr.layers[i].collections, *pr.layers[i].config);
    } else {
      l.dense = pr.model.weights[i];
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

inline NetworkModel decode_model(const CSPModel& m) {
  NetworkModel out;
  out.name = m.name;
  out.input = m.input;
  for (const auto& l : m.layers) {
    out.layers.push_back(l.spec);
    out.weights.push_back(l.csp ? decode(*l.csp) : l.dense);
  }
  validate(out);
  return out;
}

// Rebuilds the pruning outcome (dense weights, masks, collections and
// pattern assignments) from CSP storage.
inline PruneResult structure_of(const CSPModel& m) {
  PruneResult r;
  r.model = decode_model(m);
  r.masks.assign(m.layers.size(), {});
  r.layers.assign(m.layers.size(), {});
  std::size_t ord = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (!m.layers[i].spec.has_weights()) continue;
    if (const auto& c = m.layers[i].csp) {
      r.layers[i].config = LayerPruneConfig{ord, c->kernel_dim, c->n_sets, c->n_pat, c->n_keep};
      r.layers[i].collections = c->collections;
      r.layers[i].pattern_indices = c->pattern_indices;
      const std::size_t area = c->kernel_dim * c->kernel_dim;
      auto& mk = r.masks[i];
      mk.assign(c->kernel_count() * area, 0);
      for (std::size_t n = 0; n < c->kernel_count(); ++n) {
        const auto& pm = c->pattern_of(n).mask;
        std::copy(pm.begin(), pm.end(), mk.begin() + static_cast<std::ptrdiff_t>(n * area));
      }
    }
    ++ord;
  }
  return r;
}

// Structure from `structure`, weights from `weights`; the architectures must
// agree. Encoding fails later if a masked weight is nonzero.
inline PruneResult with_weights(PruneResult structure, const NetworkModel& weights) {
  if (weights.layers != structure.model.layers || weights.input != structure.model.input)
    throw DimensionError("model architecture differs from the CSP structure");
  structure.model = weights;
  return structure;
}

struct LayerStorage {
  std::size_t layer = 0;  // index into CSPModel::layers
  bool pruned = false;
  std::size_t weight_bits = 0;
  std::size_t index_bits = 0;
  std::size_t dictionary_bits = 0;
  std::size_t bias_bits = 0;
  std::size_t dense_weight_bits = 0;  // kernel_count * K^2 * word_len

  std::size_t total() const { return weight_bits + index_bits + dictionary_bits + bias_bits; }
  std::size_t total_without_dictionary() const { return weight_bits + index_bits + bias_bits; }
};

struct StorageReport {
  std::size_t word_len = 32;
  std::vector<LayerStorage> layers;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.total();
    return n;
  }
  std::size_t total_without_dictionary() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.total_without_dictionary();
    return n;
  }
  std::size_t dense_weight_bits() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.dense_weight_bits;
    return n;
  }
};

// Per pruned layer: kept weights and biases at word_len bits, ceil(log2 N_pat)
// index bits per kernel, and N_sets * N_pat * K^2 dictionary bits. Unpruned
// layers count all weights and biases at word_len.
inline StorageReport storage_bits(const CSPModel& m, std::size_t word_len) {
  if (word_len != 8 && word_len != 16 && word_len != 32)
    throw UsageError("word length must be 8, 16 or 32 bits, got " + std::to_string(word_len));
  StorageReport rep;
  rep.word_len = word_len;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (!l.spec.has_weights()) continue;
    LayerStorage s;
    s.layer = i;
    s.dense_weight_bits = l.spec.weight_count() * word_len;
    if (l.csp) {
      const auto& c = *l.csp;
      s.pruned = true;
      s.weight_bits = c.kept_weights.size() * word_len;
      s.index_bits = c.kernel_count() * index_bits(c.n_pat);
      s.dictionary_bits = c.n_sets * c.n_pat * c.kernel_dim * c.kernel_dim;
      s.bias_bits = c.bias.size() * word_len;
    } else {
      s.weight_bits = l.dense.data.size() * word_len;
      s.bias_bits = l.dense.bias.size() * word_len;
    }
    rep.layers.push_back(s);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// IKRC file format (docs/formats.md)

inline constexpr std::uint16_t kIkrcVersion = 1;

namespace detail {

class BitPacker {
public:
  void put(std::uint64_t value, std::size_t bits) {
    for (std::size_t b = 0; b < bits; ++b) {
      if (used_ % 8 == 0) bytes_.push_back(0);
      if ((value >> b) & 1u) bytes_.back() |= static_cast<std::uint8_t>(1u << (used_ % 8));
      ++used_;
    }
  }
  // Closes the current byte; subsequent bits start on a fresh byte.
  void pad() { used_ = (used_ + 7) / 8 * 8; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
  std::vector<std::uint8_t> bytes_;
  std::size_t used_ = 0;
};

class BitUnpacker {
public:
  explicit BitUnpacker(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint64_t get(std::size_t bits) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < bits; ++b, ++pos_)
      if ((bytes_[pos_ / 8] >> (pos_ % 8)) & 1u) v |= std::uint64_t{1} << b;
    return v;
  }
  void pad() { pos_ = (pos_ + 7) / 8 * 8; }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace detail

inline std::vector<std::uint8_t> serialize_csp(const CSPModel& m) {
  ByteWriter w;
  w.magic("IKRC");
  w.u16(kIkrcVersion);
  w.u32_checked(m.name.size());
  w.bytes({reinterpret_cast<const std::uint8_t*>(m.name.data()), m.name.size()});
  detail::write_shape(w, m.input);
  w.u32_checked(m.layers.size());
  for (const auto& l : m.layers) {
    detail::write_layer_spec(w, l.spec);
    if (!l.spec.has_weights()) continue;
    if (!l.csp) {
      w.u8(0);
      w.f32s(l.dense.data);
      w.f32s(l.dense.bias);
      continue;
    }
    const auto& c = *l.csp;
    validate(c);
    w.u8(1);
    w.u32_checked(c.kernel_dim);
    w.u32_checked(c.n_sets);
    w.u32_checked(c.n_pat);
    w.u32_checked(c.n_keep);
    const std::size_t area = c.kernel_dim * c.kernel_dim;
    for (const auto& col : c.collections) {
      w.u32_checked(col.patterns.size());
      detail::BitPacker bp;
      for (const auto& p : col.patterns) {
        for (std::size_t j = 0; j < area; ++j) bp.put(p.mask[j], 1);
        bp.pad();
      }
      w.bytes(bp.bytes());
    }
    detail::BitPacker idx;
    const std::size_t ib = index_bits(c.n_pat);
    for (auto pi : c.pattern_indices) idx.put(pi, ib);
    w.bytes(idx.bytes());
    w.f32s(c.kept_weights);
    w.f32s(c.bias);
  }
  return w.take();
}

inline CSPModel deserialize_csp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "IKRC");
  r.expect_magic("IKRC");
  const auto version = r.u16();
  if (version != kIkrcVersion) throw IntegrityError("IKRC: unsupported version " + std::to_string(version));
  CSPModel m;
  const auto name = r.bytes(r.u32());
  m.name.assign(name.begin(), name.end());
  m.input = detail::read_shape(r);
  const auto n_layers = r.u32();
  if (n_layers == 0 || n_layers > 4096) throw IntegrityError("IKRC: implausible layer count");
  Shape3 cur = m.input;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    CSPModelLayer l;
    l.spec = detail::read_layer_spec(r);
    try {
      cur = output_shape(l.spec, cur, i);
    } catch (const DimensionError& e) {
      throw IntegrityError(std::string("IKRC: inconsistent layer table: ") + e.what());
    }
    if (l.spec.has_weights()) {
      const auto storage = r.u8();
      if (storage == 0) {
        l.dense = WeightTensor::zeros(l.spec);
        r.f32s(l.dense.data);
        r.f32s(l.dense.bias);
      } else if (storage == 1) {
        CSPLayer c;
        c.spec = l.spec;
        c.kernel_dim = r.u32();
        c.n_sets = r.u32();
        c.n_pat = r.u32();
        c.n_keep = r.u32();
        const std::size_t area = c.kernel_dim * c.kernel_dim;
        if (c.kernel_dim == 0 || area > 4096 || c.n_keep > area)
          throw IntegrityError("IKRC: layer " + std::to_string(i) + " has invalid kernel geometry");
        if (l.spec.kind == LayerKind::FullyConnected && l.spec.weight_count() % area != 0)
          throw IntegrityError("IKRC: layer " + std::to_string(i) + " FC size not divisible by K*K");
        if (l.spec.kind == LayerKind::Conv && c.kernel_dim != l.spec.kernel_dim)
          throw IntegrityError("IKRC: layer " + std::to_string(i) + " kernel size disagrees with layer table");
        const std::size_t n_kernels = kernel_count(l.spec, c.kernel_dim);
        if (c.n_sets == 0 || c.n_sets > n_kernels) throw IntegrityError("IKRC: invalid set count");
        const std::size_t pattern_bytes = detail::ceil_div(area, 8);
        for (std::size_t s = 0; s < c.n_sets; ++s) {
          PatternCollection col;
          col.layer_index = i;
          col.set_index = s;
          const auto n_patterns = r.u32();
          if (n_patterns == 0 || n_patterns > c.n_pat) throw IntegrityError("IKRC: invalid dictionary size");
          detail::BitUnpacker bu(r.bytes(n_patterns * pattern_bytes));
          for (std::uint32_t p = 0; p < n_patterns; ++p) {
            std::vector<std::size_t> pos;
            for (std::size_t j = 0; j < area; ++j)
              if (bu.get(1)) pos.push_back(j);
            bu.pad();
            col.patterns.push_back(PruningPattern::from_positions(c.kernel_dim, pos));
          }
          c.collections.push_back(std::move(col));
        }
        const std::size_t ib = index_bits(c.n_pat);
        detail::BitUnpacker idx(r.bytes(detail::ceil_div(n_kernels * ib, 8)));
        c.pattern_indices.resize(n_kernels);
        for (auto& pi : c.pattern_indices) pi = static_cast<std::uint32_t>(idx.get(ib));
        c.kept_weights.resize(n_kernels * c.n_keep);
        r.f32s(c.kept_weights);
        c.bias.resize(l.spec.out_maps);
        r.f32s(c.bias);
        validate(c);
        l.csp = std::move(c);
      } else {
        throw IntegrityError("IKRC: unknown storage code " + std::to_string(storage));
      }
    }
    m.layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw IntegrityError("IKRC: " + std::to_string(r.remaining()) + " trailing bytes");
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    const bool ok = l.csp ? finite(l.csp->kept_weights) && finite(l.csp->bias) : finite(l.dense.data) && finite(l.dense.bias);
    if (!ok) throw IntegrityError("IKRC: layer " + std::to_string(i) + " has non-finite values");
  }
  return m;
}

inline void save_csp(const CSPModel& m, const std::filesystem::path& p) { write_binary_file(p, serialize_csp(m)); }
inline CSPModel load_csp(const std::filesystem::path& p) { return deserialize_csp(read_binary_file(p)); }

}  // namespace ikr
