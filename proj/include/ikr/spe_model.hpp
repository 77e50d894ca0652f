#pragma once

#include <bit>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ikr/error.hpp"
#include "ikr/prune_config.hpp"

namespace ikr {

struct SpeConfig {
  std::size_t n_keep = 1;
  std::size_t n_pat = 1;
  std::size_t kernel_dim = 3;
  std::size_t word_len = 16;
  std::size_t set_coverage = 1;
  std::size_t fan_in = 4;  // mux inputs per logic unit, calibration constant

  void validate() const {
    if (kernel_dim == 0) throw ConfigurationError("SPE kernel_dim must be positive");
    if (n_keep == 0 || n_keep > kernel_dim * kernel_dim)
      throw ConfigurationError("SPE n_keep must be in [1, K*K], got " + std::to_string(n_keep));
    if (n_pat == 0) throw ConfigurationError("SPE n_pat must be >= 1");
    if (set_coverage == 0) throw ConfigurationError("SPE set_coverage must be >= 1");
    if (word_len == 0) throw ConfigurationError("SPE word_len must be positive");
    if (fan_in == 0) throw ConfigurationError("SPE fan_in must be positive");
  }
};

struct SpeCostEstimate {
  std::size_t multipliers = 0;
  std::size_t adder_depth = 0;
  std::size_t adder_count = 0;
  std::size_t mux_cost = 0;
  std::size_t flipflop_overhead = 0;  // bits of pass-through buffering

  SpeCostEstimate& operator+=(const SpeCostEstimate& o) {
    multipliers += o.multipliers;
    adder_depth = std::max(adder_depth, o.adder_depth);
    adder_count += o.adder_count;
    mux_cost += o.mux_cost;
    flipflop_overhead += o.flipflop_overhead;
    return *this;
  }
};

namespace detail {

// Elements carried past an adder level without a partner, summed over the
// levels of a pairwise reduction tree.
inline std::size_t passthrough_count(std::size_t leaves) {
  std::size_t n = 0;
  for (std::size_t m = leaves; m > 1; m = (m + 1) / 2) n += m % 2;
  return n;
}

}  // namespace detail

inline SpeCostEstimate spe_cost(const SpeConfig& c) {
  c.validate();
  SpeCostEstimate e;
  e.multipliers = c.n_keep;
  e.adder_count = c.n_keep - 1;
  e.adder_depth = c.n_keep <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(c.n_keep - 1));
  const std::size_t inputs = c.kernel_dim * c.kernel_dim * c.set_coverage * c.n_pat;
  e.mux_cost = c.n_keep * c.word_len * ((inputs + c.fan_in - 1) / c.fan_in);
  e.flipflop_overhead = detail::passthrough_count(c.n_keep) * c.word_len;
  return e;
}

struct SpeBudget {
  std::size_t spe_count = 0;
  SpeConfig per_spe;
  SpeCostEstimate per_spe_cost;
  SpeCostEstimate total;
};

// SPEs needed for one configured layer (weight-layer ordinal) and their
// combined cost. `base` supplies word length, coverage and fan-in.
inline SpeBudget layer_spe_budget(const PruneConfig& config, std::size_t layer_index, const SpeConfig& base = {}) {
  const auto* lc = config.find(layer_index);
  if (!lc) throw UsageError("layer " + std::to_string(layer_index) + " is not in the prune config");
  SpeBudget b;
  b.per_spe = base;
  b.per_spe.n_keep = lc->n_keep;
  b.per_spe.n_pat = lc->n_pat;
  b.per_spe.kernel_dim = lc->kernel_dim;
  b.per_spe_cost = spe_cost(b.per_spe);
  b.spe_count = (lc->n_sets + base.set_coverage - 1) / base.set_coverage;
  b.total.adder_depth = b.per_spe_cost.adder_depth;
  for (std::size_t i = 0; i < b.spe_count; ++i) b.total += b.per_spe_cost;
  return b;
}

enum class SweepParam { SetCoverage, NPat, WordLen, NKeep };

inline std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::SetCoverage: return "set_coverage";
    case SweepParam::NPat: return "n_pat";
    case SweepParam::WordLen: return "word_len";
    case SweepParam::NKeep: return "n_keep";
  }
  return "?";
}

inline SweepParam parse_sweep_param(std::string_view s) {
  for (auto p : {SweepParam::SetCoverage, SweepParam::NPat, SweepParam::WordLen, SweepParam::NKeep})
    if (s == to_string(p)) return p;
  if (s == "coverage") return SweepParam::SetCoverage;
  throw UsageError("unknown sweep parameter '" + std::string(s) +
                   "' (expected set_coverage, n_pat, word_len or n_keep)");
}

struct CostPoint {
  SweepParam param = SweepParam::NPat;
  std::size_t value = 0;
  SpeCostEstimate cost;
};

// One curve: `param` takes each value in turn, everything else from `base`.
inline std::vector<CostPoint> sweep_costs(const SpeConfig& base, SweepParam param, const std::vector<std::size_t>& values) {
  if (values.empty()) throw UsageError("cost sweep needs at least one value");
  std::vector<CostPoint> out;
  for (auto v : values) {
    SpeConfig c = base;
    switch (param) {
      case SweepParam::SetCoverage: c.set_coverage = v; break;
      case SweepParam::NPat: c.n_pat = v; break;
      case SweepParam::WordLen: c.word_len = v; break;
      case SweepParam::NKeep: c.n_keep = v; break;
    }
    out.push_back({param, v, spe_cost(c)});
  }
  return out;
}

inline std::string cost_csv(const std::vector<CostPoint>& pts, bool header = true) {
  std::ostringstream os;
  if (header) os << "param,value,mux_cost,multipliers,adder_depth\n";
  for (const auto& p : pts)
    os << to_string(p.param) << ',' << p.value << ',' << p.cost.mux_cost << ',' << p.cost.multipliers << ','
       << p.cost.adder_depth << '\n';
  return os.str();
}

// Weight words consumed per cycle by all SPEs of a layer against a memory
// bus width, as a short text note.
inline std::string bandwidth_advisory(const SpeBudget& b, std::size_t bus_bits = 512) {
  const std::size_t bits = b.spe_count * b.per_spe.n_keep * b.per_spe.word_len;
  std::ostringstream os;
  os << b.spe_count << " SPE x " << b.per_spe.n_keep << " weights x " << b.per_spe.word_len << " bit = " << bits
     << " bit/cycle";
  if (bus_bits == 0) return os.str();
  const std::size_t words = bits / bus_bits, rem = bits % bus_bits;
  os << " on a " << bus_bits << "-bit bus: ";
  if (rem == 0) os << words << " full transfer(s), no idle lanes";
  else
    os << words + 1 << " transfer(s), " << (bus_bits - rem) << " idle bit(s) in the last";
  return os.str();
}

}  // namespace ikr
