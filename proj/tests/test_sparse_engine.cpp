#include <gtest/gtest.h>

#include <random>

#include "ikr/csp.hpp"
#include "ikr/prune.hpp"
#include "ikr/sparse_engine.hpp"
#include "oracle.hpp"

using namespace ikr;

namespace {

// Random layer pruned with a random (valid) config, encoded to CSP.
CSPLayer random_csp(const LayerSpec& spec, std::size_t k, std::mt19937_64& rng) {
  NetworkModel m;
  m.name = "r";
  m.layers = {spec};
  m.weights = {oracle::random_weights(spec, rng)};
  m.input = spec.kind == LayerKind::Conv ? Shape3{spec.in_maps, k + 3, k + 3} : Shape3{spec.in_maps, 1, 1};
  const std::size_t kernels = kernel_count(spec, k);
  LayerPruneConfig cfg{0, k, 1 + rng() % std::min<std::size_t>(kernels, 4), 1 + rng() % 8, rng() % (k * k + 1)};
  const auto pr = apply_pruning(m, PruneConfig{{cfg}});
  return encode(spec, pr.model.weights[0], pr.masks[0], pr.layers[0].collections, cfg);
}

}  // namespace

TEST(GatherPlan, Offsets) {
  const auto full = build_gather_plans({{0, 0, {PruningPattern::all_ones(3)}}});
  EXPECT_EQ(full.plan(0, 0), (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  const auto two = build_gather_plans({{0, 0, {PruningPattern::from_positions(3, std::vector<std::size_t>{1, 8})}}});
  EXPECT_EQ(two.plan(0, 0), (std::vector<std::uint32_t>{1, 8}));
  std::mt19937_64 rng(1);
  const auto col = gen_candidates(oracle::random_floats(9, rng), 3, 4);
  const auto g = build_gather_plans({{0, 0, std::vector<PruningPattern>(col.begin(), col.begin() + 8)}});
  EXPECT_EQ(g.offsets[0].size(), 8u);
  for (const auto& p : g.offsets[0]) {
    EXPECT_EQ(p.size(), 4u);
    EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
  }
  EXPECT_THROW(g.plan(0, 8), IntegrityError);
}

TEST(GatherPlan, ScatterGatherIdentity) {
  std::mt19937_64 rng(2);
  const auto c = random_csp(LayerSpec::conv(3, 4, 3), 3, rng);
  const auto plans = build_gather_plans(c);
  const auto dense = decode(c);
  for (std::size_t n = 0; n < c.kernel_count(); ++n) {
    const auto& offs = plans.plan(c.set_of(n), c.pattern_indices[n]);
    for (std::size_t t = 0; t < offs.size(); ++t) EXPECT_EQ(dense.data[n * 9 + offs[t]], c.kernel(n).kept_weights[t]);
  }
}

TEST(CspConv, FullPatternEqualsDense) {
  std::mt19937_64 rng(3);
  auto spec = LayerSpec::conv(2, 3, 3);
  const auto w = oracle::random_weights(spec, rng);
  std::vector<std::uint8_t> mask(w.data.size(), 1);
  const auto c = encode(spec, w, mask, {{0, 0, {PruningPattern::all_ones(3)}}}, {0, 3, 1, 1, 9});
  FeatureMaps in(Shape3{2, 7, 7}, oracle::random_floats(98, rng));
  const auto a = csp_conv_forward(in, c, build_gather_plans(c));
  const auto b = conv_forward(in, spec, w);
  EXPECT_LE(oracle::max_rel_err(a.data, b.data), 1e-6);
}

TEST(CspConv, CentreWeightCrops) {
  auto spec = LayerSpec::conv(1, 1, 3);
  WeightTensor w = WeightTensor::zeros(spec);
  w.data[4] = 1.0f;
  std::vector<std::uint8_t> mask(9, 0);
  mask[4] = 1;
  const auto c = encode(spec, w, mask, {{0, 0, {PruningPattern::from_positions(3, std::vector<std::size_t>{4})}}},
                        {0, 3, 1, 1, 1});
  std::mt19937_64 rng(4);
  FeatureMaps in(Shape3{1, 5, 6}, oracle::random_floats(30, rng));
  const auto out = csp_conv_forward(in, c, build_gather_plans(c));
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(0, y, x), in.at(0, y + 1, x + 1));
}

TEST(CspConv, RandomMatchesDecodedDense) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 1 + rng() % 5;
    auto spec = LayerSpec::conv(1 + rng() % 4, 1 + rng() % 4, k, 1 + rng() % 2);
    const auto c = random_csp(spec, k, rng);
    const Shape3 in_shape{spec.in_maps, k + rng() % 6, k + rng() % 6};
    FeatureMaps in(in_shape, oracle::random_floats(in_shape.size(), rng));
    const auto a = csp_conv_forward(in, c, build_gather_plans(c));
    const auto ref = oracle::conv({in_shape, {in.data.begin(), in.data.end()}}, spec, decode(c));
    ASSERT_EQ(a.data.size(), ref.v.size());
    ASSERT_LE(oracle::max_rel_err(a.data, ref.v), 1e-5) << t;
  }
}

TEST(CspConv, MissingPlanIsIntegrityError) {
  std::mt19937_64 rng(6);
  const auto c = random_csp(LayerSpec::conv(2, 2, 3), 3, rng);
  FeatureMaps in(Shape3{2, 5, 5});
  EXPECT_THROW(csp_conv_forward(in, c, GatherPlan{}), IntegrityError);
}

TEST(CspFc, IdentityLike) {
  auto spec = LayerSpec::fully_connected(4, 4);
  WeightTensor w = WeightTensor::zeros(spec);
  for (int i = 0; i < 4; ++i) w.data[i * 4 + i] = 1.0f;
  w.bias = {0.5f, 0.0f, -1.0f, 2.0f};
  // K=2: flat row-major chunks of 4, so kernel n covers weights [4n, 4n+4) = row n
  std::vector<std::uint8_t> mask(16, 0);
  for (std::size_t n = 0; n < 4; ++n) mask[n * 4 + n] = 1, mask[n * 4 + (n + 1) % 4] = 1;
  PatternCollection col{0, 0, {}};
  for (std::size_t n = 0; n < 4; ++n) {
    std::vector<std::size_t> pos{n, (n + 1) % 4};
    std::sort(pos.begin(), pos.end());
    col.patterns.push_back(PruningPattern::from_positions(2, pos));
  }
  const auto c = encode(spec, w, mask, {col}, {0, 2, 1, 4, 2});
  std::vector<float> x{1, 2, 3, 4};
  const auto y = csp_fc_forward(x, c, build_gather_plans(c));
  EXPECT_EQ(y, (std::vector<float>{1.5f, 2.0f, 2.0f, 6.0f}));
}

TEST(CspFc, ZeroMatrixGivesBias) {
  auto spec = LayerSpec::fully_connected(9, 2);
  WeightTensor w = WeightTensor::zeros(spec);
  w.bias = {3.0f, -4.0f};
  NetworkModel m{"z", Shape3{9, 1, 1}, {spec}, {w}};
  const LayerPruneConfig cfg{0, 3, 2, 4, 3};
  const auto pr = apply_pruning(m, PruneConfig{{cfg}});
  const auto c = encode(spec, pr.model.weights[0], pr.masks[0], pr.layers[0].collections, cfg);
  std::mt19937_64 rng(1);
  EXPECT_EQ(csp_fc_forward(oracle::random_floats(9, rng), c, build_gather_plans(c)), w.bias);
}

TEST(CspFc, RandomMatchesDecodedDense) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 1 + rng() % 4;
    const std::size_t in = k * k * (1 + rng() % 5);
    auto spec = LayerSpec::fully_connected(in, 1 + rng() % 6);
    const auto c = random_csp(spec, k, rng);
    const auto x = oracle::random_floats(in, rng);
    const auto a = csp_fc_forward(x, c, build_gather_plans(c));
    const auto ref = oracle::fc({x.begin(), x.end()}, spec, decode(c));
    ASSERT_EQ(a.size(), ref.size());
    ASSERT_LE(oracle::max_rel_err(a, ref), 1e-5) << t;
  }
  EXPECT_THROW(csp_fc_forward(std::vector<float>(3), random_csp(LayerSpec::fully_connected(4, 2), 2, rng), GatherPlan{}),
               DimensionError);
}

TEST(SparseEngine, WholeNetworkMatchesDense) {
  auto m = make_lenet5();
  initialize(m, 3);
  for (auto i : m.weight_layers())
    for (auto& b : m.weights[i].bias) b = 0.01f;
  const auto pr = apply_pruning(m, lenet5_prune_config());
  const auto csp = encode_model(pr);
  SparseEngine eng(csp);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) {
    const auto x = oracle::random_floats(784, rng, 0.0f, 1.0f);
    const auto a = eng.forward(x);
    const auto b = predict(pr.model, x);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
  }
}

TEST(OpCount, FullKeepIsHundredPercent) {
  const auto m = make_lenet5();
  EXPECT_DOUBLE_EQ(count_ops(m).density(), 100.0);
  PruneConfig full{{{0, 5, 1, 1, 25}, {1, 5, 1, 1, 25}, {2, 5, 1, 1, 25}, {3, 5, 1, 1, 25}}};
  EXPECT_DOUBLE_EQ(count_ops(m.layers, m.input, full).density(), 100.0);
}

TEST(OpCount, UniformQuarter) {
  const auto m = make_model("q", "1x8C4-MP2-2x8C4-32FC-4Softmax", Shape3{2, 20, 20});
  PruneConfig cfg;
  for (std::size_t o = 0; o < 5; ++o) cfg.layers.push_back({o, 4, 1, 1, 4});
  EXPECT_NEAR(count_ops(m.layers, m.input, cfg).density(), 25.0, 1e-9);
}

TEST(OpCount, ConvFormulas) {
  const auto m = make_lenet5();
  const auto ops = count_ops(m.layers, m.input, lenet5_prune_config());
  ASSERT_EQ(ops.layers.size(), 4u);
  EXPECT_EQ(ops.layers[0].dense_mul, 20u * 1 * 25 * 24 * 24);
  EXPECT_EQ(ops.layers[0].sparse_mul, 20u * 1 * 6 * 24 * 24);
  EXPECT_EQ(ops.layers[1].sparse_mul * 25, ops.layers[1].dense_mul * 3);
  EXPECT_EQ(ops.layers[2].sparse_mul, 32000u);
  EXPECT_EQ(ops.dense_mul(), ops.layers[0].dense_mul + ops.layers[1].dense_mul + 400000 + 5000);
  // adds: (N_keep - 1) per inner product + channel accumulation + bias
  EXPECT_EQ(ops.layers[1].sparse_add, 50u * 8 * 8 * (20 * 2 + 19 + 1));
  const auto csp = encode_model(apply_pruning(make_lenet5(), lenet5_prune_config()));
  EXPECT_EQ(count_ops(csp).sparse_total(), ops.sparse_total());
}
