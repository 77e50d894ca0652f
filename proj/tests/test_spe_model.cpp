#include <gtest/gtest.h>

#include "ikr/prune_config.hpp"
#include "ikr/spe_model.hpp"

using namespace ikr;

namespace {

SpeConfig cfg(std::size_t n_keep, std::size_t n_pat = 8, std::size_t word_len = 16, std::size_t coverage = 1) {
  SpeConfig c;
  c.n_keep = n_keep;
  c.n_pat = n_pat;
  c.kernel_dim = 3;
  c.word_len = word_len;
  c.set_coverage = coverage;
  return c;
}

}  // namespace

TEST(SpeCost, SixKeptWeights) {
  const auto e = spe_cost(cfg(6));
  EXPECT_EQ(e.multipliers, 6u);
  EXPECT_EQ(e.adder_depth, 3u);
  EXPECT_EQ(e.adder_count, 5u);
  EXPECT_EQ(e.flipflop_overhead, 16u);  // one operand passes level 2 unpaired
  EXPECT_EQ(e.mux_cost, 6u * 16 * 18);  // 72 inputs / fan-in 4
}

TEST(SpeCost, SingleWeightNeedsNoAdders) {
  const auto e = spe_cost(cfg(1));
  EXPECT_EQ(e.multipliers, 1u);
  EXPECT_EQ(e.adder_depth, 0u);
  EXPECT_EQ(e.adder_count, 0u);
  EXPECT_EQ(e.flipflop_overhead, 0u);
}

TEST(SpeCost, PowerOfTwoHasNoFlipflops) {
  for (std::size_t n = 1; n <= 9; ++n) {
    const auto e = spe_cost(cfg(n));
    EXPECT_EQ(e.flipflop_overhead == 0, std::has_single_bit(n)) << n;
    EXPECT_EQ(e.adder_depth, n == 1 ? 0u : static_cast<std::size_t>(std::ceil(std::log2(n)))) << n;
  }
  EXPECT_EQ(spe_cost(cfg(4)).adder_depth, 2u);
  EXPECT_EQ(detail::passthrough_count(5), 2u);
}

TEST(SpeCost, MonotoneInPatternsAndCoverage) {
  std::size_t prev = 0;
  for (std::size_t p = 1; p <= 32; ++p) {
    const auto m = spe_cost(cfg(4, p)).mux_cost;
    EXPECT_GE(m, prev);
    prev = m;
  }
  prev = 0;
  for (std::size_t c = 1; c <= 8; ++c) {
    const auto m = spe_cost(cfg(4, 8, 16, c)).mux_cost;
    EXPECT_GT(m, prev);
    prev = m;
  }
  EXPECT_EQ(spe_cost(cfg(4, 8, 32)).mux_cost, 4 * spe_cost(cfg(4, 8, 8)).mux_cost);
  EXPECT_EQ(spe_cost(cfg(4, 8, 32)).multipliers, spe_cost(cfg(4, 8, 8)).multipliers);
}

TEST(SpeCost, RejectsInvalid) {
  EXPECT_THROW(spe_cost(cfg(0)), ConfigurationError);
  EXPECT_THROW(spe_cost(cfg(10)), ConfigurationError);
  EXPECT_THROW(spe_cost(cfg(3, 0)), ConfigurationError);
  EXPECT_THROW(spe_cost(cfg(3, 8, 16, 0)), ConfigurationError);
}

TEST(SpeBudget, LeNetSecondConv) {
  SpeConfig base;
  base.set_coverage = 2;
  const auto b = layer_spe_budget(lenet5_prune_config(), 1, base);
  EXPECT_EQ(b.spe_count, 5u);
  EXPECT_EQ(b.per_spe.n_keep, 3u);
  EXPECT_EQ(b.per_spe.kernel_dim, 5u);
  EXPECT_EQ(b.total.multipliers, 15u);
  EXPECT_EQ(b.total.adder_depth, 2u);
  EXPECT_EQ(b.total.mux_cost, 5 * b.per_spe_cost.mux_cost);
  EXPECT_THROW(layer_spe_budget(lenet5_prune_config(), 9), UsageError);
  base.set_coverage = 3;
  EXPECT_EQ(layer_spe_budget(lenet5_prune_config(), 1, base).spe_count, 4u);
}

TEST(SpeSweep, CsvAndParams) {
  const auto pts = sweep_costs(cfg(4), SweepParam::NPat, {1, 2, 4});
  ASSERT_EQ(pts.size(), 3u);
  const auto csv = cost_csv(pts);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "param,value,mux_cost,multipliers,adder_depth");
  EXPECT_NE(csv.find("n_pat,4," + std::to_string(pts[2].cost.mux_cost) + ",4,2"), std::string::npos);
  EXPECT_EQ(parse_sweep_param("coverage"), SweepParam::SetCoverage);
  EXPECT_EQ(parse_sweep_param("word_len"), SweepParam::WordLen);
  EXPECT_THROW(parse_sweep_param("bogus"), UsageError);
  EXPECT_THROW(sweep_costs(cfg(4), SweepParam::NKeep, {}), UsageError);
  EXPECT_THROW(sweep_costs(cfg(4), SweepParam::NKeep, {12}), ConfigurationError);
}

TEST(SpeSweep, BandwidthAdvisory) {
  SpeConfig base;
  base.word_len = 16;
  auto b = layer_spe_budget(lenet5_prune_config(), 0, base);  // 2 SPE x 6 x 16 = 192 bit
  const auto a = bandwidth_advisory(b, 512);
  EXPECT_NE(a.find("192 bit/cycle"), std::string::npos);
  EXPECT_NE(a.find("320 idle"), std::string::npos);
}
