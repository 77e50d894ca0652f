#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ikr/error.hpp"
#include "ikr/model.hpp"

namespace ikr {

// A K x K binary keep-mask. Position p = row * K + col.
struct PruningPattern {
  std::size_t kernel_dim = 0;
  std::vector<std::uint8_t> mask;
  std::size_t keep_count = 0;

  static PruningPattern from_positions(std::size_t k, std::span<const std::size_t> positions) {
    PruningPattern p;
    p.kernel_dim = k;
    p.mask.assign(k * k, 0);
    for (auto pos : positions) {
      if (pos >= k * k) throw ConfigurationError("pattern position " + std::to_string(pos) + " outside kernel");
      p.mask[pos] = 1;
    }
    p.keep_count = static_cast<std::size_t>(std::count(p.mask.begin(), p.mask.end(), std::uint8_t{1}));
    return p;
  }

  static PruningPattern all_ones(std::size_t k) {
    std::vector<std::size_t> pos(k * k);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    return from_positions(k, pos);
  }

  // Kept positions in ascending row-major order.
  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> out;
    out.reserve(keep_count);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.push_back(i);
    return out;
  }

  bool keeps(std::size_t pos) const { return mask[pos] != 0; }

  friend bool operator==(const PruningPattern& a, const PruningPattern& b) {
    return a.kernel_dim == b.kernel_dim && a.mask == b.mask;
  }
};

// Non-owning view of a weight buffer as consecutive K x K kernels. Conv
// weights (out, in, K, K) give kernel n = filter * in_maps + channel; FC
// weights are chunked row-major, K*K weights per virtual kernel.
template <typename T>
class KernelView {
public:
  KernelView(std::span<T> data, std::size_t kernel_dim, std::size_t channels_per_filter)
      : data_(data), k_(kernel_dim), channels_(channels_per_filter) {}

  std::size_t kernel_dim() const { return k_; }
  std::size_t kernel_area() const { return k_ * k_; }
  std::size_t kernel_count() const { return data_.size() / kernel_area(); }
  // Input channels per filter for conv views, 0 for virtual FC views.
  std::size_t channels_per_filter() const { return channels_; }

  std::span<T> kernel(std::size_t n) const { return data_.subspan(n * kernel_area(), kernel_area()); }
  std::span<T> data() const { return data_; }

private:
  std::span<T> data_;
  std::size_t k_;
  std::size_t channels_;
};

struct KernelCoord {
  std::size_t filter = 0;
  std::size_t channel = 0;
};

// (filter, channel) for conv kernels; (row, column) of the first element for
// virtual FC kernels.
template <typename T>
KernelCoord kernel_coordinates(const KernelView<T>& view, std::size_t n, std::size_t fc_in_dim = 0) {
  if (view.channels_per_filter() > 0) return {n / view.channels_per_filter(), n % view.channels_per_filter()};
  const std::size_t flat = n * view.kernel_area();
  return fc_in_dim ? KernelCoord{flat / fc_in_dim, flat % fc_in_dim} : KernelCoord{n, 0};
}

inline KernelView<float> conv_kernels(WeightTensor& w, const LayerSpec& spec) {
  return {std::span<float>(w.data), spec.kernel_dim, spec.in_maps};
}
inline KernelView<const float> conv_kernels(const WeightTensor& w, const LayerSpec& spec) {
  return {std::span<const float>(w.data), spec.kernel_dim, spec.in_maps};
}

namespace detail {
inline void check_fc_divisible(std::size_t size, std::size_t k) {
  if (k == 0) throw ConfigurationError("virtual kernel dimension must be positive");
  if (size % (k * k) != 0)
    throw ConfigurationError("FC weight count " + std::to_string(size) + " is not divisible by " +
                             std::to_string(k * k) + " (remainder " + std::to_string(size % (k * k)) + ")");
}
}  // namespace detail

// Groups each consecutive K*K FC weights into one virtual kernel.
inline KernelView<float> fc_to_kernels(WeightTensor& w, std::size_t kernel_dim) {
  detail::check_fc_divisible(w.data.size(), kernel_dim);
  return {std::span<float>(w.data), kernel_dim, 0};
}
inline KernelView<const float> fc_to_kernels(const WeightTensor& w, std::size_t kernel_dim) {
  detail::check_fc_divisible(w.data.size(), kernel_dim);
  return {std::span<const float>(w.data), kernel_dim, 0};
}

struct KernelSet {
  std::size_t layer_index = 0;
  std::size_t set_index = 0;
  std::vector<std::size_t> kernel_refs;  // flat kernel indices into the layer's KernelView
};

// Contiguous blocks in flattened (filter-major, channel-minor) order; the
// first kernel_count % n_sets blocks get one extra kernel.
inline std::vector<KernelSet> group_kernels(std::size_t kernel_count, std::size_t n_sets,
                                            std::size_t layer_index = 0) {
  if (n_sets == 0) throw ConfigurationError("layer " + std::to_string(layer_index) + ": n_sets must be >= 1");
  if (n_sets > kernel_count)
    throw ConfigurationError("layer " + std::to_string(layer_index) + ": n_sets " + std::to_string(n_sets) +
                             " exceeds kernel count " + std::to_string(kernel_count));
  std::vector<KernelSet> sets(n_sets);
  const std::size_t base = kernel_count / n_sets;
  const std::size_t extra = kernel_count % n_sets;
  std::size_t next = 0;
  for (std::size_t s = 0; s < n_sets; ++s) {
    sets[s].layer_index = layer_index;
    sets[s].set_index = s;
    const std::size_t n = base + (s < extra ? 1 : 0);
    sets[s].kernel_refs.resize(n);
    std::iota(sets[s].kernel_refs.begin(), sets[s].kernel_refs.end(), next);
    next += n;
  }
  return sets;
}

// Which set a kernel belongs to under group_kernels().
inline std::size_t set_of_kernel(std::size_t kernel, std::size_t kernel_count, std::size_t n_sets) {
  const std::size_t base = kernel_count / n_sets;
  const std::size_t extra = kernel_count % n_sets;
  const std::size_t big = extra * (base + 1);
  return kernel < big ? kernel / (base + 1) : extra + (kernel - big) / base;
}

// Q(p, W) = sum |p .* W|.
inline double quality(const PruningPattern& p, std::span<const float> kernel) {
  if (p.mask.size() != kernel.size())
    throw DimensionError("pattern has " + std::to_string(p.mask.size()) + " entries, kernel has " +
                         std::to_string(kernel.size()));
  double q = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i)
    if (p.mask[i]) q += std::fabs(static_cast<double>(kernel[i]));
  return q;
}

inline constexpr std::size_t kDefaultCandidates = 10;
inline constexpr std::size_t kCandidatePoolExtra = 3;

// Candidate patterns for one kernel: every n_keep-subset of the
// n_keep + 3 largest-magnitude positions, best quality first.
inline std::vector<PruningPattern> gen_candidates(std::span<const float> kernel, std::size_t kernel_dim,
                                                  std::size_t n_keep,
                                                  std::size_t n_candidates = kDefaultCandidates) {
  const std::size_t area = kernel_dim * kernel_dim;
  if (kernel.size() != area) throw DimensionError("kernel size does not match kernel_dim");
  if (n_keep > area)
    throw ConfigurationError("n_keep " + std::to_string(n_keep) + " exceeds kernel area " + std::to_string(area));

  std::vector<std::size_t> ranked(area);
  std::iota(ranked.begin(), ranked.end(), std::size_t{0});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(kernel[a]) > std::fabs(kernel[b]); });
  const std::size_t pool = std::min(area, n_keep + kCandidatePoolExtra);

  struct Scored {
    PruningPattern pattern;
    double q;
  };
  std::vector<Scored> all;
  // Lexicographic walk over index combinations of the ranked pool.
  std::vector<std::size_t> comb(n_keep);
  std::iota(comb.begin(), comb.end(), std::size_t{0});
  std::vector<std::size_t> pos(n_keep);
  while (true) {
    for (std::size_t i = 0; i < n_keep; ++i) pos[i] = ranked[comb[i]];
    auto p = PruningPattern::from_positions(kernel_dim, pos);
    const double q = quality(p, kernel);
    all.push_back({std::move(p), q});

    std::size_t i = n_keep;
    while (i > 0 && comb[i - 1] == pool - n_keep + (i - 1)) --i;
    if (i == 0) break;
    ++comb[i - 1];
    for (std::size_t j = i; j < n_keep; ++j) comb[j] = comb[j - 1] + 1;
  }
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.q > b.q; });
  if (all.size() > n_candidates) all.resize(n_candidates);
  std::vector<PruningPattern> out;
  out.reserve(all.size());
  for (auto& s : all) out.push_back(std::move(s.pattern));
  return out;
}

struct PatternCollection {
  std::size_t layer_index = 0;
  std::size_t set_index = 0;
  std::vector<PruningPattern> patterns;

  std::size_t size() const { return patterns.size(); }
  bool empty() const { return patterns.empty(); }
};

// Keeps the n_pat distinct candidates with the highest summed quality over
// every kernel of the set. Earlier-generated candidates win ties.
template <typename T>
PatternCollection select_collection(std::span<const std::vector<PruningPattern>> candidates_per_kernel,
                                    const KernelSet& set, const KernelView<T>& kernels, std::size_t n_pat) {
  if (n_pat == 0) throw ConfigurationError("n_pat must be >= 1");
  std::vector<PruningPattern> distinct;
  std::map<std::vector<std::uint8_t>, std::size_t> seen;
  std::size_t keep = 0;
  bool first = true;
  for (const auto& list : candidates_per_kernel) {
    for (const auto& p : list) {
      if (first) {
        keep = p.keep_count;
        first = false;
      } else if (p.keep_count != keep) {
        throw IntegrityError("layer " + std::to_string(set.layer_index) + " set " + std::to_string(set.set_index) +
                             ": candidates disagree on keep count (" + std::to_string(keep) + " vs " +
                             std::to_string(p.keep_count) + ")");
      }
      if (seen.emplace(p.mask, distinct.size()).second) distinct.push_back(p);
    }
  }
  if (distinct.empty())
    throw ConfigurationError("layer " + std::to_string(set.layer_index) + " set " + std::to_string(set.set_index) +
                             ": no candidate patterns");

  std::vector<double> overall(distinct.size(), 0.0);
  for (std::size_t c = 0; c < distinct.size(); ++c) {
    const auto pos = distinct[c].positions();
    double sum = 0.0;
    for (auto kref : set.kernel_refs) {
      auto w = kernels.kernel(kref);
      double q = 0.0;
      for (auto p : pos) q += std::fabs(static_cast<double>(w[p]));
      sum += q;
    }
    overall[c] = sum;
  }
  std::vector<std::size_t> order(distinct.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return overall[a] > overall[b]; });

  PatternCollection col;
  col.layer_index = set.layer_index;
  col.set_index = set.set_index;
  for (std::size_t i = 0; i < std::min(n_pat, order.size()); ++i) col.patterns.push_back(distinct[order[i]]);
  return col;
}

struct Assignment {
  std::size_t pattern_index = 0;
  std::vector<float> masked_kernel;
};

// Exhaustive argmax of Q over the collection; the lowest index wins ties.
inline Assignment assign_pattern(std::span<const float> kernel, const PatternCollection& collection) {
  if (collection.empty()) throw ConfigurationError("cannot assign a pattern from an empty collection");
  std::size_t best = 0;
  double best_q = -1.0;
  for (std::size_t k = 0; k < collection.patterns.size(); ++k) {
    const double q = quality(collection.patterns[k], kernel);
    if (q > best_q) {
      best_q = q;
      best = k;
    }
  }
  Assignment a;
  a.pattern_index = best;
  a.masked_kernel.resize(kernel.size());
  const auto& mask = collection.patterns[best].mask;
  for (std::size_t i = 0; i < kernel.size(); ++i) a.masked_kernel[i] = mask[i] ? kernel[i] : 0.0f;
  return a;
}

}  // namespace ikr
