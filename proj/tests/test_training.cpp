#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "swinc/errors.hpp"
#include "swinc/param_count.hpp"
#include "swinc/train.hpp"

using namespace swinc;

namespace {

std::vector<std::int32_t> ids(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Dice, IdenticalMasksScoreOne) {
  const auto m = dice_score(ids({0, 1, 2, 2, 1}), ids({0, 1, 2, 2, 1}), 3);
  for (double d : m.dice) EXPECT_EQ(d, 1.0);
  EXPECT_EQ(m.mean_foreground, 1.0);
}

TEST(Dice, DisjointMasksScoreZero) {
  const auto m = dice_score(ids({1, 1, 0, 0}), ids({0, 0, 1, 1}), 2);
  EXPECT_EQ(m.dice[1], 0.0);
}

TEST(Dice, HalfOverlap) {
  std::vector<std::int32_t> p(16, 0), t(16, 0);
  for (int i = 0; i < 8; ++i) p[static_cast<size_t>(i)] = 1;
  for (int i = 4; i < 12; ++i) t[static_cast<size_t>(i)] = 1;
  EXPECT_DOUBLE_EQ(dice_score(p, t, 2).dice[1], 0.5);
}

TEST(Dice, AbsentClassScoresOneAndMeanSkipsBackground) {
  const auto m = dice_score(ids({0, 1, 1, 0}), ids({0, 1, 0, 0}), 3);
  EXPECT_EQ(m.dice[2], 1.0);
  EXPECT_DOUBLE_EQ(m.mean_foreground, (2.0 / 3.0 + 1.0) / 2.0);
}

TEST(Dice, SymmetricAndBounded) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int32_t> a(64), b(64);
    for (auto& v : a) v = static_cast<std::int32_t>(rng.uniform_int(0, 3));
    for (auto& v : b) v = static_cast<std::int32_t>(rng.uniform_int(0, 3));
    const auto ab = dice_score(a, b, 4), ba = dice_score(b, a, 4);
    for (size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(ab.dice[c], ba.dice[c]);
      EXPECT_GE(ab.dice[c], 0.0);
      EXPECT_LE(ab.dice[c], 1.0);
    }
  }
}

TEST(Dice, SizeMismatchIsDimensionError) {
  EXPECT_THROW(dice_score(ids({0, 1}), ids({0}), 2), DimensionError);
}

TEST(Loss, ConfidentCorrectLogitsNearZero) {
  Rng rng(2);
  Tensor labels({1, 2, 2, 2});
  for (auto& v : labels.data()) v = static_cast<double>(rng.uniform_int(0, 2));
  Tensor logits = Tensor::zeros({1, 3, 2, 2, 2});
  for (Index i = 0; i < 8; ++i)
    for (Index c = 0; c < 3; ++c)
      logits.data()[static_cast<size_t>(c * 8 + i)] = c == static_cast<Index>(labels.data()[static_cast<size_t>(i)]) ? 20.0 : -20.0;
  EXPECT_LT(dice_ce_loss(logits, labels).item(), 0.01);
}

TEST(Loss, UniformTwoClassCrossEntropyIsLnTwo) {
  const Tensor logits = Tensor::zeros({2, 2, 2, 3, 1});
  Tensor labels({2, 2, 3, 1});
  for (size_t i = 0; i < labels.data().size(); ++i) labels.data()[i] = static_cast<double>(i % 2);
  EXPECT_NEAR(dice_ce_loss(logits, labels, 0.0, 1.0).item(), std::numbers::ln2, 1e-15);
}

TEST(Loss, NonNegative) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = oracle::random({1, 3, 2, 2, 2}, rng, -3.0, 3.0);
    Tensor labels({1, 2, 2, 2});
    for (auto& v : labels.data()) v = static_cast<double>(rng.uniform_int(0, 2));
    EXPECT_GE(dice_ce_loss(logits, labels).item(), 0.0);
  }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0}, g{2.0}, m{0.0}, v{0.0};
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.0;
  adamw_update(p, g, m, v, 1, o);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameter) {
  std::vector<double> p{1.5}, g{0.0}, m{0.0}, v{0.0};
  AdamWOptions o;
  o.weight_decay = 0.0;
  adamw_update(p, g, m, v, 1, o);
  EXPECT_EQ(p[0], 1.5);
}

TEST(AdamW, DecoupledDecayScalesParameter) {
  std::vector<double> p{2.0}, g{0.0}, m{0.0}, v{0.0};
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.1;
  adamw_update(p, g, m, v, 1, o);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * 0.99);
}

TEST(AdamW, ShapeMismatchIsStateError) {
  std::vector<double> p{1.0, 2.0}, g{0.0}, m{0.0, 0.0}, v{0.0, 0.0};
  EXPECT_THROW(adamw_update(p, g, m, v, 1, AdamWOptions{}), StateError);
}

TEST(SyntheticData, SameSeedIsBitwiseIdentical) {
  SyntheticSpec s;
  s.seed = 5;
  const auto a = gen_dataset(s, 3), b = gen_dataset(s, 3);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(oracle::bitwise_equal(a[i].volume, b[i].volume));
    EXPECT_TRUE(oracle::bitwise_equal(a[i].labels, b[i].labels));
  }
}

TEST(SyntheticData, NoiselessSingleShapeHasTwoIntensities) {
  SyntheticSpec s;
  s.num_classes = 2;
  s.min_shapes = s.max_shapes = 1;
  s.noise_sigma = 0.0;
  const auto d = gen_dataset(s, 2);
  for (const auto& sample : d)
    for (double v : sample.volume.data()) EXPECT_TRUE(v == s.intensity(0) || v == s.intensity(1)) << v;
}

TEST(SyntheticData, VoxelizedSphereVolume) {
  for (double r : {4.0, 5.5, 7.0, 10.0}) {
    Tensor labels = Tensor::zeros({32, 32, 32});
    const Index n = paint_sphere(labels, {16.0, 15.5, 16.2}, r, 1);
    const double expect = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    EXPECT_NEAR(static_cast<double>(n), expect, 0.15 * expect) << r;
  }
}

TEST(SyntheticData, EveryClassAppearsInEverySample) {
  SyntheticSpec s;
  s.num_classes = 5;
  s.min_shapes = 4;
  s.max_shapes = 6;
  s.seed = 9;
  const auto d = gen_dataset(s, 10);
  for (const auto& sample : d) {
    std::vector<int> seen(5, 0);
    for (double v : sample.labels.data()) seen[static_cast<size_t>(v)] = 1;
    for (int c = 0; c < 5; ++c) EXPECT_TRUE(seen[static_cast<size_t>(c)]) << "class " << c;
  }
}

TEST(SyntheticData, OversizedShapeIsConfigError) {
  SyntheticSpec s;
  s.edge = 8;
  s.max_radius = 5.0;
  EXPECT_THROW(gen_dataset(s, 1), ConfigError);
}

TEST(ParamCount, SingleLinear) { EXPECT_EQ(count::linear(4, 4), 20); }

TEST(ParamCount, AnalyticMatchesAllocationForRandomConfigs) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig c;
    c.base_dim = 4 * rng.uniform_int(1, 3);
    c.heads = {1, 2, static_cast<Index>(rng.uniform_int(1, 2)) * 2, 4};
    for (auto& d : c.depths) d = rng.uniform_int(1, 2);
    c.window = rng.uniform_int(2, 4);
    c.ff_kind = static_cast<FeedForwardKind>(rng.uniform_int(0, 2));
    c.merge_kind = static_cast<MergeKind>(rng.uniform_int(0, 1));
    c.decoder_kind = static_cast<DecoderKind>(rng.uniform_int(0, 1));
    c.mlp_ratio = rng.uniform_int(0, 1) ? 4.0 : 7.0;
    c.widths = {static_cast<double>(rng.uniform_int(0, 2)), 1.0, 0.5, static_cast<double>(rng.uniform_int(0, 1))};
    c.num_classes = rng.uniform_int(2, 5);
    c.in_channels = rng.uniform_int(1, 2);
    c.use_rel_bias = rng.uniform_int(0, 1) == 1;
    const auto model = SegmentationModel::make(c, static_cast<std::uint64_t>(trial));
    const auto params = model.parameters();
    EXPECT_EQ(count_trainable(params), total(count_params(c))) << "trial " << trial;
    EXPECT_EQ(allocated_breakdown(params), count_params(c)) << "trial " << trial;
  }
}

TEST(Training, FixedSeedIsDeterministic) {
  ModelConfig c = ModelConfig::toy();
  c.base_dim = 4;
  c.heads = {1, 1, 2, 2};
  c.depths = {1, 1, 1, 1};
  SyntheticSpec s;
  s.seed = 3;
  const auto data = gen_dataset(s, 4);
  TrainOptions o;
  o.steps = 3;
  o.log_every = 3;
  std::vector<std::vector<TrainRecord>> runs;
  std::vector<std::vector<double>> weights;
  for (int r = 0; r < 2; ++r) {
    SegmentationModel m = SegmentationModel::make(c, 11);
    runs.push_back(train(m, data, {data[0]}, o));
    std::vector<double> w;
    for (const auto& p : m.parameters()) w.insert(w.end(), p.tensor.data().begin(), p.tensor.data().end());
    weights.push_back(std::move(w));
  }
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (size_t i = 0; i < runs[0].size(); ++i) {
    EXPECT_EQ(runs[0][i].loss, runs[1][i].loss);
    EXPECT_EQ(runs[0][i].val.dice, runs[1][i].val.dice);
  }
  EXPECT_EQ(weights[0], weights[1]);
}

// Per-step losses are noisy (random batches), so "decreases over the first 50
// steps" is checked on means of consecutive 10-step blocks, which must fall
// block after block in at least 9 of 10 seeds.
TEST(TrainingSlow, LossDecreasesInNineOfTenSeeds) {
  int decreasing = 0;
  for (int seed = 0; seed < 10; ++seed) {
    ModelConfig c = ModelConfig::toy();
    c.base_dim = 4;
    c.heads = {1, 1, 2, 2};
    c.depths = {1, 1, 1, 1};
    SyntheticSpec s;
    s.seed = static_cast<std::uint64_t>(100 + seed);
    const auto data = gen_dataset(s, 8);
    TrainOptions o;
    o.steps = 50;
    o.log_every = 1000;
    o.seed = static_cast<std::uint64_t>(seed);
    SegmentationModel m = SegmentationModel::make(c, static_cast<std::uint64_t>(seed));
    std::vector<double> losses;
    train(m, data, {data[0]}, o, {}, [&](Index, double l) { losses.push_back(l); });
    ASSERT_EQ(losses.size(), 50u);
    std::vector<double> blocks(5, 0.0);
    for (size_t i = 0; i < 50; ++i) blocks[i / 10] += losses[i] / 10.0;
    bool ok = true;
    for (size_t b = 1; b < 5; ++b) ok = ok && blocks[b] < blocks[b - 1];
    decreasing += ok;
  }
  EXPECT_GE(decreasing, 9);
}
