#include <gtest/gtest.h>

#include "oracles.hpp"
#include "swinc/errors.hpp"
#include "swinc/model.hpp"

using namespace swinc;

namespace {

// 2x2x2 neighbourhood gather written as explicit loops.
Tensor gather_oracle(const Tensor& v) {
  const Index n = v.dim(0), c = v.dim(1), d = v.dim(2) / 2, h = v.dim(3) / 2, w = v.dim(4) / 2;
  Tensor out({n, d * h * w, 8 * c});
  for (Index b = 0; b < n; ++b)
    for (Index z = 0; z < d; ++z)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          for (Index o = 0; o < 8; ++o)
            for (Index ch = 0; ch < c; ++ch)
              out.at({b, (z * h + y) * w + x, o * c + ch}) = v.at({b, ch, 2 * z + o / 4, 2 * y + (o / 2) % 2, 2 * x + o % 2});
  return out;
}

ModelConfig small_swin() {
  ModelConfig c = ModelConfig::toy();
  c.ff_kind = FeedForwardKind::mlp;
  c.merge_kind = MergeKind::linear;
  c.depths = {2, 1, 1, 2};
  return c;
}

}  // namespace

TEST(PatchEmbed, HalvesExtentsWithBaseChannels) {
  ModelConfig c;
  c.base_dim = 48;
  Rng rng(1);
  const Encoder e = Encoder::make(c, rng);
  EXPECT_EQ(e.patch_embed(Tensor({1, 1, 32, 32, 32})).shape(), (Shape{1, 48, 16, 16, 16}));
}

TEST(PatchEmbed, AllOnesSumsTheCube) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(2);
  Encoder e = Encoder::make(c, rng);
  e.embed.weight = Tensor::ones(e.embed.weight.shape());
  e.embed.bias = Tensor::zeros(e.embed.bias.shape());
  const Tensor y = e.patch_embed(Tensor::ones({1, 1, 4, 4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 8.0);
}

TEST(PatchEmbed, IsTheStridedConvolution) {
  Rng rng(3);
  const Encoder e = Encoder::make(ModelConfig::toy(), rng);
  const Tensor x = oracle::random({1, 1, 6, 4, 8}, rng);
  EXPECT_TRUE(oracle::bitwise_equal(e.patch_embed(x), conv3d(x, e.embed.weight, e.embed.bias, 2, 0)));
}

TEST(PatchMerge, BothKindsShrinkEightfoldAndDoubleChannels) {
  for (auto kind : {MergeKind::linear, MergeKind::conv}) {
    Rng rng(4);
    const PatchMerge m = PatchMerge::make(kind, 6, rng);
    EXPECT_EQ(m.forward(oracle::random({1, 6, 8, 8, 8}, rng)).shape(), (Shape{1, 12, 4, 4, 4})) << to_string(kind);
  }
}

TEST(PatchMerge, OddExtentIsDimensionError) {
  Rng rng(5);
  const PatchMerge m = PatchMerge::make(MergeKind::linear, 2, rng);
  EXPECT_THROW(m.forward(Tensor({1, 2, 3, 4, 4})), DimensionError);
}

TEST(PatchMerge, LinearKindMatchesGatherOracle) {
  Rng rng(6);
  PatchMerge m = PatchMerge::make(MergeKind::linear, 3, rng);
  rng.fill_uniform(m.norm.gamma, 0.5, 1.5);
  rng.fill_uniform(m.norm.beta, -0.5, 0.5);
  const Tensor x = oracle::random({2, 3, 4, 6, 2}, rng);
  EXPECT_TRUE(oracle::bitwise_equal(gather_neighbourhoods(x), gather_oracle(x)));
  const Tensor tokens = linear(layer_norm(gather_oracle(x), m.norm.gamma, m.norm.beta), m.reduce.weight, m.reduce.bias);
  EXPECT_LT(oracle::max_abs_diff(m.forward(x), to_volume(tokens, {2, 3, 1})), 1e-12);
}

TEST(PatchMerge, LinearKindKeepsConstantsConstant) {
  Rng rng(7);
  const PatchMerge m = PatchMerge::make(MergeKind::linear, 4, rng);
  Tensor x({1, 4, 4, 4, 4});
  for (Index c = 0; c < 4; ++c)
    for (Index i = 0; i < 64; ++i) x.data()[static_cast<size_t>(c * 64 + i)] = static_cast<double>(c) - 1.5;
  const Tensor y = m.forward(x);
  for (Index c = 0; c < 8; ++c)
    for (Index i = 1; i < 8; ++i) EXPECT_EQ(y.data()[static_cast<size_t>(c * 8 + i)], y.data()[static_cast<size_t>(c * 8)]);
}

TEST(PatchMerge, ConvKindHasMoreParameters) {
  for (Index c : {1, 8, 48}) {
    Rng rng(8);
    ParamList lin, conv;
    PatchMerge::make(MergeKind::linear, c, rng).collect("", lin);
    PatchMerge::make(MergeKind::conv, c, rng).collect("", conv);
    EXPECT_GT(count_trainable(conv), count_trainable(lin)) << c;
  }
}

TEST(Encoder, PyramidShapesAt64WithDefaults) {
  ModelConfig c;
  Rng rng(9);
  Encoder e = Encoder::make(c, rng);
  NoGradGuard guard;
  const FeaturePyramid p = e.forward(oracle::random({1, 1, 64, 64, 64}, rng), true);
  ASSERT_EQ(p.levels.size(), 5u);
  EXPECT_EQ(p.levels[0].shape(), (Shape{1, 48, 32, 32, 32}));
  EXPECT_EQ(p.levels[1].shape(), (Shape{1, 48, 32, 32, 32}));
  EXPECT_EQ(p.levels[2].shape(), (Shape{1, 96, 16, 16, 16}));
  EXPECT_EQ(p.levels[3].shape(), (Shape{1, 192, 8, 8, 8}));
  EXPECT_EQ(p.levels[4].shape(), (Shape{1, 384, 4, 4, 4}));
}

TEST(Encoder, MergeCountFollowsTapping) {
  Rng rng(10);
  ModelConfig c = ModelConfig::toy();
  EXPECT_EQ(Encoder::make(c, rng).merges.size(), 3u);
  c.decoder_kind = DecoderKind::swinunetr;
  EXPECT_EQ(Encoder::make(c, rng).merges.size(), 4u);
}

TEST(Encoder, UndersizedInputIsConfigErrorNamingTheMinimum) {
  Rng rng(11);
  Encoder e = Encoder::make(ModelConfig::toy(), rng);
  try {
    e.forward(Tensor({1, 1, 32, 16, 32}), false);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("32"), std::string::npos) << err.what();
  }
}

TEST(Encoder, NonMultipleExtentsArePadded) {
  Rng rng(12);
  Encoder e = Encoder::make(ModelConfig::toy(), rng);
  NoGradGuard guard;
  const FeaturePyramid p = e.forward(oracle::random({1, 1, 33, 32, 40}, rng), true);
  EXPECT_EQ(p.padded, (Dims3{64, 32, 64}));
  EXPECT_EQ(p.input, (Dims3{33, 32, 40}));
  EXPECT_EQ(p.levels[4].shape(), (Shape{1, 64, 4, 2, 4}));
}

TEST(Encoder, PlainSwinComposition) {
  const ModelConfig c = small_swin();
  Rng rng(13);
  Encoder e = Encoder::make(c, rng);
  const Tensor x = oracle::random({1, 1, 32, 32, 32}, rng);
  const FeaturePyramid p = e.forward(x, false);

  Tensor v = conv3d(x, e.embed.weight, e.embed.bias, 2, 0);
  double err = oracle::max_abs_diff(p.levels[0], v);
  for (int s = 0; s < kNumStages; ++s) {
    const Dims3 dims = spatial_dims(v);
    Tensor t = to_tokens(v);
    for (size_t b = 0; b < e.stages[static_cast<size_t>(s)].size(); ++b) {
      const WindowSpec spec = b % 2 == 0 ? WindowSpec::regular(c.window) : WindowSpec::shifted(c.window);
      t = e.stages[static_cast<size_t>(s)][b].forward(t, dims, spec, false);
    }
    v = to_volume(t, dims);
    err = std::max(err, oracle::max_abs_diff(p.levels[static_cast<size_t>(s + 1)], v));
    if (s < kNumStages - 1) {
      const PatchMerge& m = e.merges[static_cast<size_t>(s)];
      const Tensor merged = linear(layer_norm(gather_oracle(v), m.norm.gamma, m.norm.beta), m.reduce.weight, m.reduce.bias);
      v = to_volume(merged, {dims[0] / 2, dims[1] / 2, dims[2] / 2});
    }
  }
  EXPECT_LT(err, 1e-6);
}

TEST(Encoder, ChannelsDoubleAndVolumeShrinksAtEveryMerge) {
  Rng rng(14);
  Encoder e = Encoder::make(ModelConfig::toy(), rng);
  NoGradGuard guard;
  const FeaturePyramid p = e.forward(oracle::random({1, 1, 64, 32, 32}, rng), true);
  for (size_t i = 2; i < p.levels.size(); ++i) {
    EXPECT_EQ(p.levels[i].dim(1), 2 * p.levels[i - 1].dim(1));
    EXPECT_EQ(p.levels[i].numel() / p.levels[i].dim(1) * 8, p.levels[i - 1].numel() / p.levels[i - 1].dim(1));
  }
}

TEST(Encoder, ValidationRejectsIndivisibleHeads) {
  ModelConfig c = ModelConfig::toy();
  c.heads = {3, 2, 4, 8};
  EXPECT_THROW(c.validate(), ConfigError);
}
