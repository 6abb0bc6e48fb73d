#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "swinc/errors.hpp"
#include "swinc/ops.hpp"

using namespace swinc;

namespace {

Tensor filled(Shape s, double v) { return Tensor(std::move(s), v); }

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.data().size(), 24u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, GradMatchesShapeWhenRequested) {
  Tensor x = filled({2, 3}, 1.0);
  x.set_requires_grad(true);
  sum(scale(x, 2.0)).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad().size(), 6u);
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(Tensor, BranchingReuseAccumulates) {
  Tensor x = filled({3}, 0.5);
  x.set_requires_grad(true);
  sum(add(x, x)).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(Tensor, NonScalarBackwardIsContractError) {
  Tensor x = filled({3}, 1.0);
  x.set_requires_grad(true);
  EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Tensor, NoGradGuardSkipsTape) {
  Tensor x = filled({3}, 1.0);
  x.set_requires_grad(true);
  NoGradGuard g;
  Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, NonFiniteForwardIsNumericError) {
  Tensor x = filled({1, 1, 1, 1, 1}, std::numeric_limits<double>::infinity());
  Tensor w = filled({1, 1, 1, 1, 1}, 1.0);
  EXPECT_THROW(conv3d(x, w, {}, 1, 0), NumericError);
}

TEST(Conv3d, ScalarKernelScales) {
  Tensor y = conv3d(filled({1, 1, 3, 3, 3}, 1.0), filled({1, 1, 1, 1, 1}, 2.0), Tensor::zeros({1}), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3, 3}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Conv3d, CentreOneHotIsIdentity) {
  Rng rng(1);
  Tensor x = oracle::random({1, 1, 4, 5, 3}, rng);
  Tensor w = Tensor::zeros({1, 1, 3, 3, 3});
  w.at({0, 0, 1, 1, 1}) = 1.0;
  EXPECT_TRUE(oracle::bitwise_equal(conv3d(x, w, Tensor::zeros({1}), 1, 1), x));
}

TEST(Conv3d, MatchesDirectSummation) {
  Rng rng(2);
  Tensor x = oracle::random({1, 2, 4, 4, 4}, rng), w = oracle::random({3, 2, 3, 3, 3}, rng), b = oracle::random({3}, rng);
  EXPECT_LT(oracle::max_abs_diff(conv3d(x, w, b, 1, 1), oracle::conv3d(x, w, b, 1, 1)), 1e-6);
}

TEST(Conv3d, ShapeMismatchNamesBothShapes) {
  try {
    conv3d(Tensor({1, 2, 4, 4, 4}), Tensor({3, 5, 3, 3, 3}), {}, 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("[3x5x3x3x3]"), std::string::npos) << m;
    EXPECT_NE(m.find("[1x2x4x4x4]"), std::string::npos) << m;
  }
}

TEST(Conv3d, PointwiseMatchesLinearOnTokens) {
  Rng rng(3);
  Tensor x = oracle::random({2, 5, 3, 2, 4}, rng), w = oracle::random({7, 5}, rng), b = oracle::random({7}, rng);
  Tensor via_conv = conv3d(x, reshape(w, {7, 5, 1, 1, 1}), b, 1, 0);
  Tensor via_linear = to_volume(linear(to_tokens(x), w, b), {3, 2, 4});
  EXPECT_LT(oracle::max_abs_diff(via_conv, via_linear), 1e-6);
}

TEST(ConvTranspose3d, DoublesExtent) {
  Tensor y = conv_transpose3d(Tensor({1, 1, 4, 4, 4}), Tensor({1, 3, 2, 2, 2}), {}, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 8, 8, 8}));
}

TEST(ConvTranspose3d, SingleVoxelExpands) {
  Tensor x = Tensor::zeros({1, 1, 2, 2, 2});
  x.at({0, 0, 0, 0, 0}) = 3.0;
  Tensor y = conv_transpose3d(x, filled({1, 1, 2, 2, 2}, 1.0), Tensor::zeros({1}), 2);
  for (Index z = 0; z < 4; ++z)
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at({0, 0, z, r, c}), (z < 2 && r < 2 && c < 2) ? 3.0 : 0.0);
}

TEST(ConvTranspose3d, MatchesZeroStuffing) {
  Rng rng(4);
  Tensor x = oracle::random({1, 2, 3, 3, 3}, rng), w = oracle::random({2, 3, 2, 2, 2}, rng), b = oracle::random({3}, rng);
  EXPECT_LT(oracle::max_abs_diff(conv_transpose3d(x, w, b, 2), oracle::conv_transpose3d(x, w, b, 2)), 1e-6);
}

TEST(ConvTranspose3d, KernelBelowStrideIsConfigError) {
  EXPECT_THROW(conv_transpose3d(Tensor({1, 1, 2, 2, 2}), Tensor({1, 1, 1, 1, 1}), {}, 2), ConfigError);
}

TEST(AvgPool3d, ConstantIsPreserved) {
  Tensor y = avg_pool3d(filled({1, 2, 3, 4, 5}, 7.0));
  for (double v : y.data()) EXPECT_NEAR(v, 7.0, 1e-12);
}

TEST(AvgPool3d, BoundaryDivisorCountsInBoundsOnly) {
  Tensor x({1, 1, 1, 1, 3}, std::vector<double>{0, 3, 6});
  Tensor y = avg_pool3d(x);
  EXPECT_DOUBLE_EQ(y.data()[0], 1.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 3.0);
  EXPECT_DOUBLE_EQ(y.data()[2], 4.5);
}

TEST(AvgPool3d, MatchesWindowedMean) {
  Rng rng(5);
  Tensor x = oracle::random({2, 3, 4, 3, 5}, rng);
  EXPECT_LT(oracle::max_abs_diff(avg_pool3d(x), oracle::avg_pool3d(x, 3, 1, 1)), 1e-6);
}

TEST(Linear, IdentityWeight) {
  Rng rng(6);
  Tensor x = oracle::random({2, 3, 4}, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (Index i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  EXPECT_TRUE(oracle::bitwise_equal(linear(x, eye, Tensor::zeros({4})), x));
}

TEST(Linear, HandExample) {
  Tensor y = linear(Tensor({2}, std::vector<double>{1, 2}), Tensor({2, 2}, std::vector<double>{1, 1, 1, -1}),
                    Tensor({2}, std::vector<double>{0, 1}));
  EXPECT_DOUBLE_EQ(y.data()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 0.0);
}

TEST(Linear, ExtentMismatchIsDimensionError) {
  EXPECT_THROW(linear(Tensor({2, 3}), Tensor({4, 5}), {}), DimensionError);
}

TEST(Norms, ConstantInputGivesZeros) {
  const Tensor x = filled({2, 3, 2, 2, 2}, 4.0);
  const Tensor g = Tensor::ones({3}), b = Tensor::zeros({3});
  BatchNormStats st = BatchNormStats::make(3);
  const Tensor in = instance_norm(x, g, b), bn = batch_norm(x, g, b, st, true),
               ln = layer_norm(filled({4, 3}, 4.0), g, b);
  for (const Tensor* t : {&in, &bn, &ln}) {
    for (double v : t->data()) EXPECT_NEAR(v, 0.0, 1e-9);
  }
}

TEST(Norms, LayerNormHandExample) {
  Tensor y = layer_norm(Tensor({1, 2}, std::vector<double>{1, 3}), Tensor::ones({2}), Tensor::zeros({2}), 0.0);
  EXPECT_DOUBLE_EQ(y.data()[0], -1.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 1.0);
}

TEST(Norms, BatchNormTrainingStandardizes) {
  Rng rng(7);
  Tensor x = oracle::random({3, 2, 4, 4, 4}, rng, -3.0, 5.0);
  BatchNormStats st = BatchNormStats::make(2);
  Tensor y = batch_norm(x, Tensor::ones({2}), Tensor::zeros({2}), st, true);
  for (Index c = 0; c < 2; ++c) {
    double s = 0, s2 = 0, n = 0;
    for (Index b = 0; b < 3; ++b)
      for (Index i = 0; i < 64; ++i) {
        const double v = y.data()[static_cast<size_t>((b * 2 + c) * 64 + i)];
        s += v;
        s2 += v * v;
        ++n;
      }
    EXPECT_LT(std::abs(s / n), 1e-6);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0, 1e-4);
  }
}

TEST(Norms, BatchNormEvalWithoutStatsIsStateError) {
  BatchNormStats st = BatchNormStats::make(2);
  EXPECT_THROW(batch_norm(Tensor({1, 2, 2, 2, 2}), Tensor::ones({2}), Tensor::zeros({2}), st, false), StateError);
}

TEST(Activations, Examples) {
  Tensor x({3}, std::vector<double>{0.0, 1.0, -2.0});
  Tensor g = gelu(x);
  EXPECT_DOUBLE_EQ(g.data()[0], 0.0);
  EXPECT_NEAR(g.data()[1], oracle::gelu(1.0), 1e-12);
  EXPECT_NEAR(g.data()[1], 0.84134, 1e-5);
  Tensor p = prelu(Tensor({1, 1, 2}, std::vector<double>{0.0, -2.0}), Tensor({1}, std::vector<double>{0.25}));
  EXPECT_DOUBLE_EQ(p.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(p.data()[1], -0.5);
}

TEST(Activations, GeluOddPartIsHalfIdentity) {
  Rng rng(8);
  Tensor x = oracle::random({257}, rng, -6.0, 6.0);
  Tensor a = gelu(x), b = gelu(scale(x, -1.0));
  for (size_t i = 0; i < 257; ++i) EXPECT_NEAR(a.data()[i] - b.data()[i], x.data()[i], 1e-6);
}

TEST(Softmax, Examples) {
  Tensor u = softmax(Tensor::zeros({1, 4}));
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  Tensor r = softmax(Tensor({2}, std::vector<double>{std::log(1.0), std::log(2.0)}));
  EXPECT_NEAR(r.data()[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.data()[1], 2.0 / 3.0, 1e-12);
  Tensor m = softmax(Tensor::zeros({3}), Tensor({3}, std::vector<double>{0.0, kMaskValue, 0.0}));
  EXPECT_NEAR(m.data()[0], 0.5, 1e-9);
  EXPECT_LT(m.data()[1], 1e-7);
  EXPECT_NEAR(m.data()[2], 0.5, 1e-9);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(9);
  Tensor y = softmax(oracle::random({6, 11}, rng, -30.0, 30.0));
  for (Index r = 0; r < 6; ++r) {
    double s = 0;
    for (Index c = 0; c < 11; ++c) {
      EXPECT_GE(y.at({r, c}), 0.0);
      s += y.at({r, c});
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Determinism, RepeatedForwardIsIdentical) {
  Rng rng(10);
  Tensor x = oracle::random({1, 3, 5, 4, 6}, rng), w = oracle::random({4, 3, 3, 3, 3}, rng);
  EXPECT_TRUE(oracle::bitwise_equal(avg_pool3d(conv3d(x, w, {}, 1, 1)), avg_pool3d(conv3d(x, w, {}, 1, 1))));
}

TEST(ShapeOps, PadCropRoundTrip) {
  Rng rng(11);
  Tensor x = oracle::random({1, 2, 3, 5, 4}, rng);
  EXPECT_TRUE(oracle::bitwise_equal(crop_spatial(pad_spatial(x, {4, 8, 8}), {3, 5, 4}), x));
}

TEST(ShapeOps, TokensVolumeRoundTrip) {
  Rng rng(12);
  Tensor x = oracle::random({2, 3, 2, 3, 4}, rng);
  Tensor t = to_tokens(x);
  EXPECT_EQ(t.shape(), (Shape{2, 24, 3}));
  // D-major, then H, then W.
  EXPECT_DOUBLE_EQ(t.at({1, (1 * 3 + 2) * 4 + 3, 2}), x.at({1, 2, 1, 2, 3}));
  EXPECT_TRUE(oracle::bitwise_equal(to_volume(t, {2, 3, 4}), x));
  EXPECT_THROW(to_volume(t, {2, 3, 5}), DimensionError);
}
