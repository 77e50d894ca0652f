#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "ikr/dataset.hpp"
#include "ikr/layers.hpp"
#include "ikr/model.hpp"
#include "ikr/model_io.hpp"
#include "ikr/network.hpp"
#include "ikr/train.hpp"
#include "oracle.hpp"

using namespace ikr;

TEST(Architecture, LeNet5Layers) {
  const auto m = make_lenet5();
  ASSERT_EQ(m.layers.size(), 7u);
  EXPECT_EQ(m.layers[0], LayerSpec::conv(1, 20, 5));
  EXPECT_EQ(m.layers[1].kind, LayerKind::MaxPool);
  EXPECT_EQ(m.layers[2], LayerSpec::conv(20, 50, 5));
  EXPECT_EQ(m.layers[4], LayerSpec::fully_connected(800, 500));
  EXPECT_EQ(m.layers[5], LayerSpec::fully_connected(500, 10));
  EXPECT_EQ(m.layers[6].kind, LayerKind::Softmax);
  EXPECT_EQ(m.dense_weight_count(), 500u + 25000u + 400000u + 5000u);
  EXPECT_EQ(m.weight_layers(), (std::vector<std::size_t>{0, 2, 4, 5}));
}

TEST(Architecture, CnnSmallLayers) {
  const auto m = make_cnn_small();
  const auto shapes = layer_shapes(m);
  EXPECT_EQ(m.weight_layers().size(), 8u);
  EXPECT_EQ(m.layers[0], LayerSpec::conv(3, 128, 3));
  EXPECT_EQ(shapes.back(), (Shape3{10, 1, 1}));
  EXPECT_EQ(m.dense_weight_count(), 1398656u);
}

TEST(Architecture, RejectsMalformedStrings) {
  EXPECT_THROW(parse_architecture("1x20C5--10Softmax", kMnistShape), UsageError);
  EXPECT_THROW(parse_architecture("xyz", kMnistShape), UsageError);
  EXPECT_THROW(parse_architecture("0x20C5-10Softmax", kMnistShape), UsageError);
  EXPECT_THROW(parse_architecture("1x20C40-10Softmax", kMnistShape), DimensionError);
}

TEST(Shapes, ConvOutputAndErrors) {
  EXPECT_EQ(output_shape(LayerSpec::conv(2, 4, 3), Shape3{2, 6, 6}, 0), (Shape3{4, 4, 4}));
  try {
    (void)output_shape(LayerSpec::conv(3, 4, 3), Shape3{2, 6, 6}, 7);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 7"), std::string::npos);
  }
}

TEST(ConvForward, AllOnes) {
  FeatureMaps in(Shape3{1, 3, 3}, std::vector<float>(9, 1.0f));
  auto spec = LayerSpec::conv(1, 1, 3);
  WeightTensor w = WeightTensor::zeros(spec);
  std::fill(w.data.begin(), w.data.end(), 1.0f);
  auto out = conv_forward(in, spec, w);
  ASSERT_EQ(out.shape, (Shape3{1, 1, 1}));
  EXPECT_FLOAT_EQ(out.data[0], 9.0f);
}

TEST(ConvForward, DeltaKernelCropsFirstMap) {
  std::mt19937_64 rng(3);
  FeatureMaps in(Shape3{2, 5, 5}, oracle::random_floats(50, rng));
  auto spec = LayerSpec::conv(2, 1, 3);
  WeightTensor w = WeightTensor::zeros(spec);
  w.data[4] = 1.0f;  // centre of kernel (0, 0)
  auto out = conv_forward(in, spec, w);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(out.at(0, y, x), in.at(0, y + 1, x + 1));
}

TEST(ConvForward, MatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 4), size(5, 9), kd(1, 4), st(1, 2);
  for (int trial = 0; trial < 120; ++trial) {
    auto spec = LayerSpec::conv(dim(rng), dim(rng), kd(rng), st(rng));
    const Shape3 in_shape{spec.in_maps, size(rng), size(rng)};
    const auto w = oracle::random_weights(spec, rng);
    FeatureMaps in(in_shape, oracle::random_floats(in_shape.size(), rng));
    const auto out = conv_forward(in, spec, w);
    const auto ref = oracle::conv({in_shape, {in.data.begin(), in.data.end()}}, spec, w);
    ASSERT_EQ(out.shape, ref.shape);
    ASSERT_LE(oracle::max_rel_err(out.data, ref.v), 1e-6) << trial;
  }
}

TEST(FcForward, IdentityAndBias) {
  auto spec = LayerSpec::fully_connected(3, 3);
  WeightTensor w = WeightTensor::zeros(spec);
  for (int i = 0; i < 3; ++i) w.data[i * 3 + i] = 1.0f;
  std::vector<float> x{0.5f, -2.0f, 7.0f};
  EXPECT_EQ(fc_forward(x, spec, w), x);
  WeightTensor z = WeightTensor::zeros(spec);
  z.bias = {1, 2, 3};
  EXPECT_EQ(fc_forward(x, spec, z), (std::vector<float>{1, 2, 3}));
  EXPECT_THROW(fc_forward(std::vector<float>{1, 2}, spec, w), DimensionError);
}

TEST(FcForward, MatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> d(1, 40);
  for (int trial = 0; trial < 120; ++trial) {
    auto spec = LayerSpec::fully_connected(d(rng), d(rng));
    const auto w = oracle::random_weights(spec, rng);
    const auto x = oracle::random_floats(spec.in_maps, rng);
    const auto out = fc_forward(x, spec, w);
    const auto ref = oracle::fc({x.begin(), x.end()}, spec, w);
    ASSERT_EQ(out.size(), ref.size());
    ASSERT_LE(oracle::max_rel_err(out, ref), 1e-6) << trial;
  }
}

TEST(MaxPool, MatchesOracleAndPicksFirstOnTies) {
  std::mt19937_64 rng(8);
  FeatureMaps in(Shape3{3, 6, 6}, oracle::random_floats(108, rng));
  auto spec = LayerSpec::max_pool(3, 2);
  std::vector<std::uint32_t> arg;
  auto out = max_pool_forward(in, spec, &arg);
  auto ref = oracle::max_pool({in.shape, {in.data.begin(), in.data.end()}}, 2);
  for (std::size_t i = 0; i < ref.v.size(); ++i) EXPECT_EQ(out.data[i], ref.v[i]);

  FeatureMaps flat(Shape3{1, 2, 2}, std::vector<float>(4, 1.0f));
  max_pool_forward(flat, LayerSpec::max_pool(1, 2), &arg);
  EXPECT_EQ(arg[0], 0u);
}

TEST(Softmax, SumsToOne) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    auto v = oracle::random_floats(10, rng, -30.0f, 30.0f);
    auto p = softmax(v);
    double s = 0.0;
    for (float x : p) s += x;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(std::vector<float>{0.2f, 0.5f, 0.5f}), 1u);
  EXPECT_EQ(argmax(std::vector<float>{1.0f, 1.0f}), 0u);
}

namespace {

// Model whose FC weights are zero and biases favour class 0.
NetworkModel constant_class0(std::size_t classes) {
  NetworkModel m = make_model("c0", "2FC-" + std::to_string(classes) + "Softmax", Shape3{1, 2, 2});
  m.weights[1].bias[0] = 1.0f;
  return m;
}

}  // namespace

TEST(Evaluate, ConstantPredictor) {
  auto m = constant_class0(10);
  Dataset d;
  d.image_shape = {1, 2, 2};
  d.num_classes = 10;
  for (int i = 0; i < 100; ++i) {
    d.labels.push_back(0);
    d.images.insert(d.images.end(), 4, 0.5f);
  }
  EXPECT_DOUBLE_EQ(evaluate(m, d), 0.0);
  for (int i = 0; i < 100; ++i) d.labels[i] = static_cast<std::uint16_t>(i % 10);
  EXPECT_DOUBLE_EQ(evaluate(m, d), 90.0);
  Dataset empty = d;
  empty.labels.clear();
  empty.images.clear();
  EXPECT_THROW(evaluate(m, empty), UsageError);
}

TEST(Evaluate, RecountMatches) {
  auto m = make_model("t", "1x4C3-MP2-10Softmax", Shape3{1, 8, 8});
  initialize(m, 4);
  BlobOptions o;
  o.classes = 10;
  o.samples = 300;
  auto d = make_blobs(o, 9);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < d.size(); ++i) wrong += argmax(predict(m, d.image(i))) != d.labels[i];
  EXPECT_DOUBLE_EQ(evaluate(m, d), 100.0 * static_cast<double>(wrong) / 300.0);
}

TEST(Ikrm, RoundTripBitExact) {
  auto m = make_lenet5();
  initialize(m, 17);
  m.weights[0].bias[3] = -0.0f;
  m.weights[5].data[7] = 1e-38f;
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes);
  ASSERT_EQ(back.layers, m.layers);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    ASSERT_EQ(back.weights[i].data.size(), m.weights[i].data.size());
    EXPECT_EQ(std::memcmp(back.weights[i].data.data(), m.weights[i].data.data(), m.weights[i].data.size() * 4), 0);
    EXPECT_EQ(std::memcmp(back.weights[i].bias.data(), m.weights[i].bias.data(), m.weights[i].bias.size() * 4), 0);
  }
  EXPECT_EQ(serialize_model(back), bytes);
}

TEST(Ikrm, HeaderLayout) {
  auto m = make_model("ab", "3FC-2Softmax", Shape3{1, 1, 2});
  const auto b = serialize_model(m);
  ASSERT_GE(b.size(), 12u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "IKRM");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], 2);  // name length, little-endian u32
  EXPECT_EQ(b[10], 'a');
  // header 4+2+4+2, shape 12, count 4, FC(1+8) x2, softmax (1+4), floats (6+3+6+2)*4
  EXPECT_EQ(b.size(), 12u + 12 + 4 + 9 + 9 + 5 + 17 * 4);
}

TEST(Ikrm, RejectsCorruption) {
  auto m = make_model("x", "1x2C3-4FC-2Softmax", Shape3{1, 4, 4});
  auto b = serialize_model(m);
  auto bad_magic = b;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_model(bad_magic), IntegrityError);
  auto truncated = b;
  truncated.pop_back();
  EXPECT_THROW(deserialize_model(truncated), IntegrityError);
  auto trailing = b;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_model(trailing), IntegrityError);
  auto bad_version = b;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_model(bad_version), IntegrityError);
  auto nan = b;
  const float q = std::nanf("");
  std::memcpy(nan.data() + nan.size() - 4, &q, 4);
  EXPECT_THROW(deserialize_model(nan), IntegrityError);
}
