#include "swinc/decoder.hpp"

#include <cmath>

#include "swinc/errors.hpp"

namespace swinc {
namespace {

constexpr double kPreluInit = 0.25;

Tensor prelu_slopes(Index channels) { return Tensor({channels}, kPreluInit); }

Tensor cat2(const Tensor& a, const Tensor& b) {
  const std::array<Tensor, 2> parts{a, b};
  return concat(parts, 1);
}

}  // namespace

ResidualBlock ResidualBlock::make(Index cin, Index cout, Rng& rng) {
  ResidualBlock r;
  r.conv1 = ConvParams::make(cin, cout, 3, rng, false);
  r.norm1 = NormParams::make(cout);
  r.conv2 = ConvParams::make(cout, cout, 3, rng, false);
  r.norm2 = NormParams::make(cout);
  if (cin != cout) {
    r.proj = ConvParams::make(cin, cout, 1, rng, false);
    r.proj_norm = NormParams::make(cout);
  }
  r.slope1 = prelu_slopes(cout);
  r.slope2 = prelu_slopes(cout);
  return r;
}

Tensor ResidualBlock::forward(const Tensor& volume) const {
  Tensor y = conv3d(volume, conv1.weight, {}, 1, 1);
  y = prelu(instance_norm(y, norm1.gamma, norm1.beta), slope1);
  y = instance_norm(conv3d(y, conv2.weight, {}, 1, 1), norm2.gamma, norm2.beta);
  Tensor residual = volume;
  if (proj) residual = instance_norm(conv3d(volume, proj->weight, {}, 1, 0), proj_norm->gamma, proj_norm->beta);
  return prelu(add(y, residual), slope2);
}

void ResidualBlock::collect(const std::string& prefix, ParamList& out) const {
  conv1.collect(join_name(prefix, "conv1"), out);
  norm1.collect(join_name(prefix, "norm1"), out);
  conv2.collect(join_name(prefix, "conv2"), out);
  norm2.collect(join_name(prefix, "norm2"), out);
  if (proj) {
    proj->collect(join_name(prefix, "proj.conv"), out);
    proj_norm->collect(join_name(prefix, "proj.norm"), out);
  }
  out.push_back({join_name(prefix, "act1.weight"), slope1});
  out.push_back({join_name(prefix, "act2.weight"), slope2});
}

UpsampleBlock UpsampleBlock::make(Index cin, Index cout, Rng& rng) {
  UpsampleBlock u;
  u.weight = Tensor::zeros({cin, cout, 2, 2, 2});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cout * 8));
  rng.fill_uniform(u.weight, -bound, bound);
  u.norm = NormParams::make(cout);
  u.slope = prelu_slopes(cout);
  return u;
}

Tensor UpsampleBlock::forward(const Tensor& volume) const {
  const Tensor y = conv_transpose3d(volume, weight, {}, 2);
  return prelu(instance_norm(y, norm.gamma, norm.beta), slope);
}

void UpsampleBlock::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "conv.weight"), weight});
  norm.collect(join_name(prefix, "norm"), out);
  out.push_back({join_name(prefix, "act.weight"), slope});
}

DecoderPlan DecoderPlan::make(const ModelConfig& config) {
  DecoderPlan p;
  const Index c0 = config.base_dim;
  const bool pre_merge = config.decoder_kind == DecoderKind::swinception;
  for (int i = 0; i < kNumLevels; ++i) {
    p.width[i] = c0 << i;
    if (pre_merge) {
      p.tap_channels[i] = i == 0 ? c0 : c0 << (i - 1);
      p.tap_scale[i] = i == 0 ? 1 : i;
    } else {
      p.tap_channels[i] = c0 << i;
      p.tap_scale[i] = i + 1;
    }
    // Post-merge wiring feeds the second-deepest tap straight into its fuse block.
    p.skip_block[i] = pre_merge || i != kNumLevels - 2;
  }
  return p;
}

Decoder Decoder::make(const ModelConfig& config, Rng& rng) {
  config.validate();
  Decoder d;
  d.config = config;
  d.plan = DecoderPlan::make(config);
  const DecoderPlan& p = d.plan;
  for (int i = 0; i < kNumLevels; ++i) {
    if (p.skip_block[i]) {
      d.skip[i] = ResidualBlock::make(p.tap_channels[i], p.width[i], rng);
    } else if (p.tap_channels[i] != p.width[i]) {
      throw ConfigError("decoder: unprocessed tap " + std::to_string(i) + " must already have " +
                        std::to_string(p.width[i]) + " channels");
    }
  }
  for (int i = kNumLevels - 2; i >= 0; --i) {
    Index below = p.width[i + 1];
    if (p.upsamples_into(i)) {
      d.up[i] = UpsampleBlock::make(p.width[i + 1], p.width[i], rng);
      below = p.width[i];
    }
    d.fuse[i] = ResidualBlock::make(below + p.width[i], p.width[i], rng);
  }
  const Index c0 = config.base_dim;
  d.final_up = UpsampleBlock::make(p.width[0], c0, rng);
  d.stem = ResidualBlock::make(config.in_channels, c0, rng);
  d.final_fuse = ResidualBlock::make(2 * c0, c0, rng);
  d.head = ConvParams::make(c0, config.num_classes, 1, rng);
  return d;
}

Tensor Decoder::forward(const FeaturePyramid& pyr, const Tensor& raw) const {
  if (pyr.levels.size() != static_cast<size_t>(kNumLevels)) {
    throw DimensionError("decoder: expected " + std::to_string(kNumLevels) + " pyramid levels, got " +
                         std::to_string(pyr.levels.size()));
  }
  if (raw.rank() != 5 || spatial_dims(raw) != pyr.input || raw.dim(1) != config.in_channels) {
    throw DimensionError("decoder: raw input " + shape_str(raw.shape()) + " does not match the pyramid");
  }
  for (int i = 0; i < kNumLevels; ++i) {
    const Tensor& t = pyr.levels[static_cast<size_t>(i)];
    const Index f = Index{1} << plan.tap_scale[i];
    const Dims3 want{pyr.padded[0] / f, pyr.padded[1] / f, pyr.padded[2] / f};
    if (t.rank() != 5 || t.dim(1) != plan.tap_channels[i] || spatial_dims(t) != want) {
      throw DimensionError("decoder: level " + std::to_string(i) + " has shape " + shape_str(t.shape()) +
                           ", expected " + std::to_string(plan.tap_channels[i]) + " channels at " +
                           shape_str({want[0], want[1], want[2]}));
    }
  }

  auto skip_of = [&](int i) {
    const Tensor& t = pyr.levels[static_cast<size_t>(i)];
    return skip[i] ? skip[i]->forward(t) : t;
  };
  Tensor x = skip_of(kNumLevels - 1);
  for (int i = kNumLevels - 2; i >= 0; --i) {
    const Tensor s = skip_of(i);
    if (up[i]) x = up[i]->forward(x);
    x = fuse[i].forward(cat2(x, s));
  }
  x = final_up.forward(x);
  const Tensor padded_raw = pyr.padded == pyr.input ? raw : pad_spatial(raw, pyr.padded);
  x = final_fuse.forward(cat2(x, stem.forward(padded_raw)));
  Tensor logits = conv3d(x, head.weight, head.bias, 1, 0);
  if (pyr.padded != pyr.input) logits = crop_spatial(logits, pyr.input);
  return logits;
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  for (int i = 0; i < kNumLevels; ++i) {
    if (skip[i]) skip[i]->collect(join_name(prefix, "skip." + std::to_string(i)), out);
  }
  for (int i = kNumLevels - 2; i >= 0; --i) {
    if (up[i]) up[i]->collect(join_name(prefix, "up." + std::to_string(i)), out);
    fuse[i].collect(join_name(prefix, "fuse." + std::to_string(i)), out);
  }
  final_up.collect(join_name(prefix, "final_up"), out);
  stem.collect(join_name(prefix, "stem"), out);
  final_fuse.collect(join_name(prefix, "final_fuse"), out);
  head.collect(join_name(prefix, "head"), out);
}

}  // namespace swinc
