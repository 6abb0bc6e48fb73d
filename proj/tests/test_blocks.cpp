#include <gtest/gtest.h>

#include "claims.hpp"
#include "swinc/errors.hpp"
#include "swinc/param_count.hpp"

using namespace swinc;

namespace {

template <class F>
void warm(F&& f, const Shape& shape, Rng& rng) {
  NoGradGuard guard;
  Tensor x(shape);
  rng.fill_normal(x, 0.0, 1.0);
  f(x, true);
}

Index probe_radius(const std::function<Tensor(const Tensor&, bool)>& f, Index channels, Rng& rng) {
  const Shape shape{1, channels, 9, 9, 9};
  warm(f, shape, rng);
  return receptive_field_probe([&](const Tensor& x) { return f(x, false); }, shape, {4, 4, 4}).radius;
}

}  // namespace

TEST(ConvBlock, EvenKernelIsConfigError) {
  Rng rng(1);
  EXPECT_THROW(ConvBlock::make(4, 4, 2, rng), ConfigError);
}

TEST(ConvBlock, IdentityConvAndIdentityNormGiveGelu) {
  Rng rng(2);
  ConvBlock b = ConvBlock::make(3, 3, 1, rng);
  b.weight = Tensor::zeros({3, 3, 1, 1, 1});
  for (Index c = 0; c < 3; ++c) b.weight.at({c, c, 0, 0, 0}) = 1.0;
  b.bias = Tensor::zeros({3});
  claims::make_bn_identity(b);
  const Tensor x = oracle::random({1, 3, 3, 4, 5}, rng, -3.0, 3.0);
  const Tensor y = b.forward(x, false);
  EXPECT_EQ(y.shape(), x.shape());
  for (size_t i = 0; i < x.data().size(); ++i) EXPECT_NEAR(y.data()[i], oracle::gelu(x.data()[i]), 1e-12);
}

TEST(ConvBlock, MatchesPrimitiveCompositionBitwise) {
  Rng rng(3);
  ConvBlock b = ConvBlock::make(2, 3, 3, rng);
  warm([&](const Tensor& x, bool t) { return b.forward(x, t); }, {2, 2, 4, 4, 4}, rng);
  const Tensor x = oracle::random({1, 2, 4, 5, 3}, rng);
  BatchNormStats stats = b.stats;
  const Tensor expect = gelu(batch_norm(conv3d(x, b.weight, b.bias, 1, 1), b.bn.gamma, b.bn.beta, stats, false));
  EXPECT_TRUE(oracle::bitwise_equal(b.forward(x, false), expect));
}

TEST(InceptionFF, ReducesToSwinMlp) {
  for (Index c : {4, 8, 16}) EXPECT_LT(claims::swin_reduction_diff(c, {3, 4, 2}, 10 + c), 1e-6) << "C=" << c;
}

TEST(InceptionFF, EqualWidthsAtSixteenChannels) {
  const auto w = BranchChannels::resolve(BranchWidths{}, 16);
  EXPECT_EQ(w.b1, 16);
  EXPECT_EQ(w.b3, 16);
  EXPECT_EQ(w.b5, 16);
  EXPECT_EQ(w.bp, 16);
  EXPECT_EQ(w.total(), 64);
  EXPECT_EQ(w.bottleneck, 2);
  Rng rng(4);
  const InceptionFF f = InceptionFF::make(16, BranchWidths{}, rng);
  EXPECT_EQ(f.out.weight.shape(), (Shape{16, 64}));
  EXPECT_EQ(f.b3_reduce->weight.dim(0), 2);
}

TEST(InceptionFF, BottleneckHasFloorOfOne) {
  EXPECT_EQ(BranchChannels::resolve(BranchWidths{}, 4).bottleneck, 1);
}

TEST(InceptionFF, TokenCountMismatchIsDimensionError) {
  Rng rng(5);
  InceptionFF f = InceptionFF::make(8, BranchWidths{}, rng);
  EXPECT_THROW(f.forward(Tensor({1, 10, 8}), {2, 2, 2}, false), DimensionError);
}

TEST(InceptionFF, BranchRadii) {
  const Index c = 8;
  const std::vector<std::pair<BranchWidths, Index>> cases = {
      {{1, 0, 0, 0}, 0}, {{0, 1, 0, 0}, 1}, {{0, 0, 1, 0}, 2}, {{0, 0, 0, 1}, 1}, {{1, 1, 1, 1}, 2}};
  for (const auto& [w, radius] : cases) {
    Rng rng(6);
    auto f = std::make_shared<InceptionFF>(InceptionFF::make(c, w, rng));
    const auto apply = [f](const Tensor& x, bool t) {
      const Dims3 d{x.dim(2), x.dim(3), x.dim(4)};
      return to_volume(f->forward(to_tokens(x), d, t), d);
    };
    EXPECT_EQ(probe_radius(apply, c, rng), radius) << w.b1 << w.b3 << w.b5 << w.bp;
  }
}

TEST(MlpFF, HiddenWidthFollowsRatio) {
  EXPECT_EQ(mlp_hidden(48, 4.0), 192);
  EXPECT_EQ(mlp_hidden(48, 7.0), 336);
  EXPECT_THROW(mlp_hidden(8, 0.0), ConfigError);
}

TEST(MlpFF, ZeroSecondLinearGivesZero) {
  Rng rng(7);
  MlpFF f = MlpFF::make(6, 4.0, rng);
  f.fc2.weight = Tensor::zeros(f.fc2.weight.shape());
  const Tensor y = f.forward(oracle::random({1, 5, 6}, rng));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MlpFF, ProbeRadiusZero) { EXPECT_EQ(claims::probe("mlp_ff").radius, 0); }

TEST(DepthwiseFF, CenterOneHotKernelsGiveDoubleGelu) {
  Rng rng(8);
  DepthwiseFF f = DepthwiseFF::make(4, 4.0, rng);
  for (ConvBlock* b : {&f.dw1, &f.dw2}) {
    b->weight = Tensor::zeros(b->weight.shape());
    for (Index c = 0; c < b->weight.dim(0); ++c) b->weight.at({c, 0, 1, 1, 1}) = 1.0;
    b->bias = Tensor::zeros(b->bias.shape());
    claims::make_bn_identity(*b);
  }
  const Dims3 dims{3, 3, 3};
  const Tensor u = oracle::random({1, 27, 4}, rng, -2.0, 2.0);
  const Tensor expect = f.fc2(gelu(gelu(f.fc1(u))));
  EXPECT_LT(oracle::max_abs_diff(f.forward(u, dims, false), expect), 1e-12);
}

TEST(DepthwiseFF, StageIsChannelDiagonal) {
  Rng rng(9);
  ConvBlock b = ConvBlock::make(4, 4, 3, rng, 4);
  warm([&](const Tensor& x, bool t) { return b.forward(x, t); }, {1, 4, 4, 4, 4}, rng);
  for (Index c = 0; c < 4; ++c) {
    Tensor x = oracle::random({1, 4, 4, 4, 4}, rng);
    x.set_requires_grad(true);
    Tensor sel = Tensor::zeros({1, 4, 4, 4, 4});
    for (Index i = 0; i < 64; ++i) sel.data()[static_cast<size_t>(c * 64 + i)] = 1.0;
    sum(mul(b.forward(x, false), sel)).backward();
    for (Index other = 0; other < 4; ++other) {
      double mag = 0.0;
      for (Index i = 0; i < 64; ++i) mag += std::abs(x.grad()[static_cast<size_t>(other * 64 + i)]);
      if (other == c)
        EXPECT_GT(mag, 0.0);
      else
        EXPECT_EQ(mag, 0.0);
    }
  }
}

TEST(DepthwiseFF, ProbeRadiusTwo) { EXPECT_EQ(claims::probe("depthwise_ff").radius, 2); }

TEST(SwinceptionBlock, ZeroOutputWeightsIsIdentity) {
  for (auto kind : {FeedForwardKind::inception, FeedForwardKind::mlp, FeedForwardKind::depthwise}) {
    Rng rng(10);
    BlockConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.window = 2;
    cfg.ff_kind = kind;
    SwinceptionBlock b = SwinceptionBlock::make(cfg, rng);
    b.attn.proj_weight = Tensor::zeros(b.attn.proj_weight.shape());
    b.attn.proj_bias = Tensor::zeros(b.attn.proj_bias.shape());
    std::visit(
        [](auto& ff) {
          using T = std::decay_t<decltype(ff)>;
          LinearParams& last = [&]() -> LinearParams& {
            if constexpr (std::is_same_v<T, InceptionFF>) return ff.out;
            else return ff.fc2;
          }();
          last.weight = Tensor::zeros(last.weight.shape());
          last.bias = Tensor::zeros(last.bias.shape());
        },
        b.ff);
    const Tensor x = oracle::random({1, 64, 8}, rng);
    EXPECT_TRUE(oracle::bitwise_equal(b.forward(x, {4, 4, 4}, WindowSpec{2, 1}, true), x)) << to_string(kind);
  }
}

TEST(SwinceptionBlock, MlpKindIsStandardSwinBlock) {
  Rng rng(11);
  BlockConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.window = 2;
  cfg.ff_kind = FeedForwardKind::mlp;
  SwinceptionBlock b = SwinceptionBlock::make(cfg, rng);
  rng.fill_uniform(b.norm1.gamma, 0.5, 1.5);
  rng.fill_uniform(b.norm2.beta, -0.5, 0.5);
  const Dims3 dims{4, 4, 6};
  const Tensor x = oracle::random({2, 96, 8}, rng);
  const auto& mlp = std::get<MlpFF>(b.ff);
  for (const WindowSpec spec : {WindowSpec{2, 0}, WindowSpec{2, 1}}) {
    const Tensor z = add(to_tokens(w_mhsa(to_volume(layer_norm(x, b.norm1.gamma, b.norm1.beta), dims), b.attn, spec)), x);
    const Tensor y = add(linear(gelu(linear(layer_norm(z, b.norm2.gamma, b.norm2.beta), mlp.fc1.weight, mlp.fc1.bias)),
                                mlp.fc2.weight, mlp.fc2.bias),
                         z);
    EXPECT_LT(oracle::max_abs_diff(b.forward(x, dims, spec, false), y), 1e-6);
  }
}

TEST(ParamAccounting, InceptionReductionCostsOnlyTheNorm) {
  for (Index c : {8, 16, 48}) {
    BlockConfig inc;
    inc.channels = c;
    inc.widths = {4, 0, 0, 0};
    BlockConfig mlp = inc;
    mlp.ff_kind = FeedForwardKind::mlp;
    EXPECT_EQ(count::feed_forward(inc) - count::feed_forward(mlp), 8 * c);
  }
}

TEST(ParamAccounting, BlockCountMatchesAllocation) {
  for (auto kind : {FeedForwardKind::inception, FeedForwardKind::mlp, FeedForwardKind::depthwise}) {
    for (bool rel : {true, false}) {
      Rng rng(12);
      BlockConfig cfg;
      cfg.channels = 24;
      cfg.heads = 3;
      cfg.window = 3;
      cfg.use_rel_bias = rel;
      cfg.ff_kind = kind;
      cfg.widths = {1, 2, 0.5, 1};
      cfg.mlp_ratio = 7.0;
      ParamList params;
      SwinceptionBlock::make(cfg, rng).collect("", params);
      EXPECT_EQ(count_trainable(params), count::block(cfg)) << to_string(kind) << rel;
    }
  }
}

TEST(BlockProbe, AttentionWindowAndEscape) {
  const auto swin = claims::probe("swin_block");
  const auto inc = claims::probe("swinception_block");
  const auto two = claims::probe("two_blocks");
  EXPECT_EQ(swin.outside_source_window, 0);
  EXPECT_GT(inc.outside_source_window, 0);
  EXPECT_GT(two.windows_touched, 1);
}
