#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "seishet/checkpoint.hpp"
#include "seishet/tiling.hpp"
#include "seishet/train.hpp"

using namespace seishet;

namespace {

std::vector<Sample> small_dataset(std::uint64_t seed, std::size_t sections = 2) {
  SyntheticConfig c;
  c.height = 64;
  c.width = 64;
  c.count = sections;
  c.seed = seed;
  c.stride = 20;
  return generate_dataset(c);
}

std::vector<Sample> numbered_samples(std::size_t n) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> img({2, 2});
    img.fill(float(i));
    s.push_back({img, Tensor<float>({2, 2})});
  }
  return s;
}

std::vector<float> tags(const std::vector<Sample>& s) {
  std::vector<float> out;
  for (const auto& x : s) out.push_back(x.image[0]);
  return out;
}

Network<float> fresh_network(std::uint64_t seed, AttentionVariant v = AttentionVariant::self_attention) {
  Prng prng(seed);
  return build_network<float>(v, prng);
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Split, TenSamplesGiveEightAndTwo) {
  const auto s = split_dataset(numbered_samples(10), 0.8, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, SameSeedSameSplit) {
  const auto a = split_dataset(numbered_samples(25), 0.8, 3);
  const auto b = split_dataset(numbered_samples(25), 0.8, 3);
  EXPECT_EQ(tags(a.train), tags(b.train));
  EXPECT_EQ(tags(a.test), tags(b.test));
  const auto c = split_dataset(numbered_samples(25), 0.8, 4);
  EXPECT_NE(tags(a.train), tags(c.train));
}

TEST(Split, UnionIsInputMultiset) {
  auto samples = numbered_samples(13);
  samples.push_back(samples[4]);
  const auto s = split_dataset(samples, 0.7, 8);
  auto joined = tags(s.train);
  const auto t = tags(s.test);
  joined.insert(joined.end(), t.begin(), t.end());
  auto expected = tags(samples);
  std::sort(joined.begin(), joined.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(joined, expected);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset(numbered_samples(1), 0.8, 0), SizeError);
  EXPECT_THROW(split_dataset({}, 0.8, 0), SizeError);
  EXPECT_THROW(split_dataset(numbered_samples(4), 1.0, 0), ConfigError);
  EXPECT_THROW(split_dataset(numbered_samples(4), 0.0, 0), ConfigError);
}

TEST(Split, BothSidesNonEmpty) {
  const auto s = split_dataset(numbered_samples(2), 0.99, 0);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.split = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.freeze_prefix = kLayerCount + 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Adam, ScalarQuadraticMatchesOracle) {
  // f(theta) = theta^2, gradient 2 theta.
  Tensor<double> theta({1});
  theta[0] = 1.5;
  Tensor<double> grad({1});
  AdamState<double> st;
  st.learning_rate = 0.1;

  double o = 1.5, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    grad[0] = 2.0 * theta[0];
    adam_step(st, {&theta}, {&grad});
    const double g = 2.0 * o;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    o -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(theta[0], o, 1e-7) << "step " << t;
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, FirstStepIsSignOfGradient) {
  Tensor<double> p({5}), g({5});
  const double gv[5] = {3.0, -0.2, 1e-3, -40.0, 0.7};
  for (int i = 0; i < 5; ++i) g[std::size_t(i)] = gv[i];
  AdamState<double> st;
  adam_step(st, {&p}, {&g});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p[std::size_t(i)], -0.001 * (gv[i] > 0 ? 1 : -1), 0.001 * 1e-3);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  Tensor<double> p({3}), g({3});
  p.fill(0.25);
  AdamState<double> st;
  adam_step(st, {&p}, {&g});
  for (double x : p.data()) EXPECT_EQ(x, 0.25);

  g.fill(1.0);
  adam_step(st, {&p}, {&g});
  const double m1 = st.m[0][0], v1 = st.v[0][0];
  const double p1 = p[0];
  g.fill(0.0);
  adam_step(st, {&p}, {&g});
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.999 * v1);
  EXPECT_NE(p[0], p1);  // momentum keeps moving after the gradient vanishes
}

TEST(Adam, FrozenParameterAndMomentsUntouched) {
  Tensor<double> a({2}), b({2}), ga({2}), gb({2});
  a.fill(1.0);
  b.fill(1.0);
  ga.fill(0.5);
  gb.fill(0.5);
  AdamState<double> st;
  for (int i = 0; i < 3; ++i) adam_step(st, {&a, &b}, {&ga, &gb}, {1, 0});
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(st.m[0][0], 0.0);
  EXPECT_EQ(st.v[0][0], 0.0);
  EXPECT_NE(b[0], 1.0);
  EXPECT_NE(st.m[1][0], 0.0);
}

TEST(Adam, ShapeMismatchIsDimensionError) {
  Tensor<double> p({3}), g({4});
  AdamState<double> st;
  EXPECT_THROW(adam_step(st, {&p}, {&g}), DimensionError);
  EXPECT_THROW(adam_step(st, {&p}, {}), DimensionError);
}

TEST(Train, OneEpochOnOneBatchReducesLoss) {
  auto samples = small_dataset(11);
  samples.resize(4);
  const auto net = fresh_network(2);
  const double before = dataset_loss(net, samples);
  auto cfg = quick_config(1);
  const auto r = fit(net, samples, {}, cfg);
  EXPECT_LT(dataset_loss(r.model, samples), before);
}

TEST(Train, LogLengthEqualsEpochs) {
  auto samples = small_dataset(12);
  samples.resize(6);
  const auto r = train(fresh_network(3, AttentionVariant::se), samples, quick_config(3));
  ASSERT_EQ(r.log.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.log[i].epoch, i + 1);
    EXPECT_TRUE(std::isfinite(r.log[i].loss));
  }
  const auto line = format_epoch(r.log[0]);
  EXPECT_EQ(line.rfind("epoch 1 loss ", 0), 0u) << line;
  EXPECT_NE(line.find(" iou "), std::string::npos);
  EXPECT_NE(line.find(" f1 "), std::string::npos);
}

TEST(Train, CallbackStopsEarly) {
  auto samples = small_dataset(12);
  samples.resize(4);
  std::size_t calls = 0;
  const auto r = train(fresh_network(3, AttentionVariant::se), samples, quick_config(5), [&](const EpochLog&) {
    return ++calls < 2;
  });
  EXPECT_EQ(calls, 2u);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Train, BitIdenticalAcrossRuns) {
  auto samples = small_dataset(13);
  samples.resize(8);
  const auto a = train(fresh_network(4), samples, quick_config(2));
  const auto b = train(fresh_network(4), samples, quick_config(2));
  EXPECT_EQ(serialize_checkpoint(a.model), serialize_checkpoint(b.model));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(format_epoch(a.log[i]), format_epoch(b.log[i]));
}

TEST(Train, EmptyDatasetIsSizeError) {
  EXPECT_THROW(fit(fresh_network(1), {}, {}, quick_config(1)), SizeError);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  auto samples = small_dataset(14);
  samples.resize(4);
  auto net = fresh_network(1, AttentionVariant::se);
  net.head.bias[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    fit(net, samples, {}, quick_config(1));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(Finetune, DefaultsFollowTransferRecipe) {
  const auto c = finetune_defaults();
  EXPECT_EQ(c.epochs, 30u);
  EXPECT_EQ(c.freeze_prefix, 2u);
  EXPECT_EQ(c.learning_rate, 0.001);
}

TEST(Finetune, StageOneFrozenEverythingElseTrains) {
  auto samples = small_dataset(15);
  samples.resize(6);
  const auto base = fresh_network(6);
  auto cfg = finetune_defaults();
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const auto r = finetune(base, samples, cfg);
  const auto infos = parameter_infos(base);
  const auto before = parameter_tensors(base), after = parameter_tensors(r.model);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].layer < 2) {
      EXPECT_TRUE(bit_equal(*before[i], *after[i])) << infos[i].name;
    } else {
      EXPECT_FALSE(bit_equal(*before[i], *after[i])) << infos[i].name;
    }
  }
}

TEST(Finetune, FreezingEveryLayerLeavesModelUnchanged) {
  auto samples = small_dataset(16);
  samples.resize(4);
  const auto base = fresh_network(7, AttentionVariant::se);
  auto cfg = finetune_defaults();
  cfg.epochs = 2;
  cfg.freeze_prefix = kLayerCount;
  const auto r = finetune(base, samples, cfg);
  const auto before = parameter_tensors(base), after = parameter_tensors(r.model);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bit_equal(*before[i], *after[i]));
}

TEST(Finetune, RescaledPatchesLossDecreases) {
  SyntheticConfig c;
  c.height = 40;
  c.width = 40;
  c.patch = 20;
  c.count = 1;
  c.seed = 21;
  const auto s = generate_section(c, 0);
  auto patches = real_patches(s.image, s.mask, 20, kPatchSize, 10);
  ASSERT_GE(patches.size(), 8u);
  patches.resize(8);
  const auto base = fresh_network(8);
  const double before = dataset_loss(base, patches);
  auto cfg = finetune_defaults();
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const auto r = fit(base, patches, {}, cfg);
  EXPECT_LT(dataset_loss(r.model, patches), before);
}
