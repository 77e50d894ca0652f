#include <gtest/gtest.h>

#include <random>

#include "ikr/dataset.hpp"
#include "ikr/network.hpp"
#include "ikr/train.hpp"
#include "oracle.hpp"

using namespace ikr;

namespace {

NetworkModel tiny_net(std::uint64_t seed) {
  auto m = make_model("tiny", "1x3C3-MP2-5FC-3Softmax", Shape3{1, 8, 8});
  initialize(m, seed);
  std::mt19937_64 rng(seed + 100);
  for (auto i : m.weight_layers())
    for (auto& b : m.weights[i].bias) b = std::uniform_real_distribution<float>(-0.1f, 0.1f)(rng);
  return m;
}

Dataset blobs(std::size_t classes, std::size_t n, std::uint64_t seed, float noise = 0.3f) {
  BlobOptions o;
  o.classes = classes;
  o.samples = n;
  o.noise = noise;
  return make_blobs(o, seed);
}

TrainHyper quick(std::size_t epochs, double lr) {
  TrainHyper h;
  h.schedule = {{epochs, lr}};
  h.batch_size = 16;
  h.dropout_keep = 1.0f;
  return h;
}

}  // namespace

TEST(Gradients, MatchCentralDifferences) {
  const auto m = tiny_net(21);
  const auto d = blobs(3, 6, 4);
  BatchActivations acts;
  forward_batch(m, d.images, d.size(), acts);
  const auto g = backward_batch(m, acts, d.labels);

  std::vector<std::vector<double>> samples;
  for (std::size_t i = 0; i < d.size(); ++i) samples.emplace_back(d.image(i).begin(), d.image(i).end());
  EXPECT_NEAR(g.loss, oracle::loss(m, samples, d.labels), 1e-5);

  std::mt19937_64 rng(99);
  const auto wl = m.weight_layers();
  const double h = 1e-4;
  int checked = 0;
  while (checked < 10) {
    const std::size_t li = wl[rng() % wl.size()];
    const std::size_t j = rng() % m.weights[li].data.size();
    const double analytic = g.layers[li].data[j];
    auto plus = m, minus = m;
    plus.weights[li].data[j] += static_cast<float>(h);
    minus.weights[li].data[j] -= static_cast<float>(h);
    const double dp = static_cast<double>(plus.weights[li].data[j]) - m.weights[li].data[j];
    const double dm = static_cast<double>(m.weights[li].data[j]) - minus.weights[li].data[j];
    const double numeric = (oracle::loss(plus, samples, d.labels) - oracle::loss(minus, samples, d.labels)) / (dp + dm);
    if (std::fabs(numeric) < 1e-6 && std::fabs(analytic) < 1e-6) continue;  // dead unit, nothing to compare
    EXPECT_LE(oracle::rel_err(analytic, numeric), 1e-3) << "layer " << li << " weight " << j;
    ++checked;
  }
}

TEST(Train, LearnsSeparableBlobs) {
  auto m = make_model("t", "1x4C3-MP2-2Softmax", Shape3{1, 8, 8});
  initialize(m, 1);
  const auto d = blobs(2, 256, 3);
  TrainHyper h = quick(5, 1e-2);
  std::vector<double> losses;
  h.on_epoch = [&](const EpochStats& s) { losses.push_back(s.mean_loss); };
  m = train(std::move(m), d, h, 7);
  EXPECT_LT(evaluate(m, d), 5.0);
  ASSERT_EQ(losses.size(), 5u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Train, ZeroRateLeavesWeights) {
  const auto m = tiny_net(2);
  const auto out = train(m, blobs(3, 64, 1), quick(2, 0.0), 5);
  EXPECT_EQ(out, m);
}

TEST(Train, DeterministicPerSeed) {
  const auto d = blobs(3, 96, 2);
  TrainHyper h = quick(2, 1e-2);
  h.dropout_keep = 0.5f;
  const auto a = train(tiny_net(3), d, h, 11);
  const auto b = train(tiny_net(3), d, h, 11);
  EXPECT_EQ(a, b);
  const auto c = train(tiny_net(3), d, h, 12);
  EXPECT_NE(a, c);
}

TEST(Train, SgdAlsoLearns) {
  auto m = make_model("t", "1x4C3-MP2-2Softmax", Shape3{1, 8, 8});
  initialize(m, 1);
  const auto d = blobs(2, 256, 3);
  TrainHyper h = quick(8, 5e-2);
  h.optimizer = Optimizer::SGD;
  h.momentum = 0.9;
  m = train(std::move(m), d, h, 7);
  EXPECT_LT(evaluate(m, d), 5.0);
}

TEST(Train, DivergenceReported) {
  auto m = tiny_net(4);
  m.weights[0].data[0] = 3e38f;
  m.weights[0].data[1] = 3e38f;
  try {
    (void)train(m, blobs(3, 32, 1, 10.0f), quick(1, 1e-3), 1);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(Train, RejectsBadHyper) {
  TrainHyper h = quick(1, 1e-3);
  h.batch_size = 0;
  EXPECT_THROW(train(tiny_net(1), blobs(3, 16, 1), h, 1), UsageError);
  h = quick(1, 1e-3);
  h.dropout_keep = 0.0f;
  EXPECT_THROW(train(tiny_net(1), blobs(3, 16, 1), h, 1), UsageError);
  EXPECT_THROW(train(tiny_net(1), blobs(2, 16, 1), quick(1, 1e-3), 1), DimensionError);
}

TEST(RetrainMasked, AllOnesMaskEqualsTrain) {
  const auto m = tiny_net(5);
  const auto d = blobs(3, 64, 5);
  LayerMasks masks(m.layers.size());
  for (auto i : m.weight_layers()) masks[i].assign(m.weights[i].data.size(), 1);
  const auto h = quick(1, 1e-2);
  EXPECT_EQ(retrain_masked(m, masks, d, h, 3), train(m, d, h, 3));
}

TEST(RetrainMasked, ZeroMaskKeepsLayerZero) {
  auto m = tiny_net(6);
  std::fill(m.weights[0].data.begin(), m.weights[0].data.end(), 0.0f);
  LayerMasks masks(m.layers.size());
  masks[0].assign(m.weights[0].data.size(), 0);
  const auto out = retrain_masked(m, masks, blobs(3, 64, 6), quick(3, 1e-2), 3);
  for (float w : out.weights[0].data) EXPECT_EQ(w, 0.0f);
}

TEST(RetrainMasked, RandomMaskTenEpochs) {
  auto m = tiny_net(7);
  std::mt19937_64 rng(1);
  LayerMasks masks(m.layers.size());
  for (auto i : m.weight_layers()) {
    masks[i].resize(m.weights[i].data.size());
    for (std::size_t j = 0; j < masks[i].size(); ++j) {
      masks[i][j] = rng() % 2;
      if (!masks[i][j]) m.weights[i].data[j] = 0.0f;
    }
  }
  const auto out = retrain_masked(m, masks, blobs(3, 64, 7), quick(10, 1e-2), 3);
  std::size_t kept = 0, changed = 0;
  for (auto i : m.weight_layers())
    for (std::size_t j = 0; j < masks[i].size(); ++j) {
      if (!masks[i][j]) ASSERT_EQ(out.weights[i].data[j], 0.0f);
      else {
        ++kept;
        changed += out.weights[i].data[j] != m.weights[i].data[j];
      }
    }
  EXPECT_GT(changed, kept / 2);
}

TEST(RetrainMasked, RejectsInconsistentMasks) {
  const auto m = tiny_net(8);
  LayerMasks masks(m.layers.size());
  masks[0].assign(3, 1);
  EXPECT_THROW(retrain_masked(m, masks, blobs(3, 16, 1), quick(1, 1e-3), 1), DimensionError);
  masks[0].assign(m.weights[0].data.size(), 0);
  EXPECT_THROW(retrain_masked(m, masks, blobs(3, 16, 1), quick(1, 1e-3), 1), IntegrityError);
}

TEST(Dataset, SplitAndAugment) {
  auto d = blobs(2, 100, 1);
  auto tv = split_train_validation(d, 20);
  EXPECT_EQ(tv.train.size(), 80u);
  EXPECT_EQ(tv.validation.size(), 20u);
  EXPECT_EQ(tv.validation.labels[0], d.labels[80]);
  auto aug = augment_duplicate(tv.train, {}, 3);
  EXPECT_EQ(aug.size(), 160u);
  EXPECT_EQ(aug.labels[80], aug.labels[0]);
  EXPECT_THROW(split_train_validation(d, 100), UsageError);
}

TEST(Dataset, StandardizeUsesGivenStats) {
  auto d = blobs(2, 50, 2);
  const auto st = channel_stats(d);
  standardize(d, st);
  const auto after = channel_stats(d);
  EXPECT_NEAR(after.mean[0], 0.0f, 1e-4);
  EXPECT_NEAR(after.stddev[0], 1.0f, 1e-3);
}

TEST(Dataset, MissingFilesAreDataErrors) {
  EXPECT_THROW(load_mnist("/nonexistent", Split::Train), DataError);
  EXPECT_THROW(load_cifar10("/nonexistent", Split::Train), DataError);
}
