#include "swinc/blocks.hpp"

#include <cmath>

#include "swinc/errors.hpp"

namespace swinc {

std::string to_string(FeedForwardKind kind) {
  switch (kind) {
    case FeedForwardKind::inception:
      return "inception";
    case FeedForwardKind::mlp:
      return "mlp";
    case FeedForwardKind::depthwise:
      return "depthwise";
  }
  return "?";
}

FeedForwardKind parse_ff_kind(const std::string& s) {
  if (s == "inception") return FeedForwardKind::inception;
  if (s == "mlp") return FeedForwardKind::mlp;
  if (s == "depthwise") return FeedForwardKind::depthwise;
  throw ConfigError("unknown feed-forward kind '" + s + "' (expected inception, mlp or depthwise)");
}

BranchChannels BranchChannels::resolve(const BranchWidths& widths, Index channels) {
  auto width = [&](double mult, const char* name) {
    if (mult < 0.0) throw ConfigError(std::string("branch width ") + name + " must be >= 0");
    return static_cast<Index>(std::llround(mult * static_cast<double>(channels)));
  };
  BranchChannels c;
  c.b1 = width(widths.b1, "b1");
  c.b3 = width(widths.b3, "b3");
  c.b5 = width(widths.b5, "b5");
  c.bp = width(widths.bp, "bp");
  if (c.total() <= 0) throw ConfigError("inception branch widths sum to zero");
  if (widths.bottleneck_ratio <= 0.0) throw ConfigError("bottleneck ratio must be > 0");
  c.bottleneck = std::max<Index>(1, static_cast<Index>(std::floor(static_cast<double>(channels) * widths.bottleneck_ratio)));
  return c;
}

Index mlp_hidden(Index channels, double ratio) {
  if (!(ratio > 0.0)) throw ConfigError("mlp ratio must be > 0, got " + std::to_string(ratio));
  return std::max<Index>(1, static_cast<Index>(std::llround(ratio * static_cast<double>(channels))));
}

NormParams NormParams::make(Index channels) { return {Tensor::ones({channels}), Tensor::zeros({channels})}; }

void NormParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "weight"), gamma});
  out.push_back({join_name(prefix, "bias"), beta});
}

LinearParams LinearParams::make(Index in, Index out, Rng& rng) {
  LinearParams p{Tensor::zeros({out, in}), Tensor::zeros({out})};
  rng.fill_trunc_normal(p.weight, 0.02);
  return p;
}

void LinearParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "weight"), weight});
  out.push_back({join_name(prefix, "bias"), bias});
}

ConvParams ConvParams::make(Index cin, Index cout, Index k, Rng& rng, bool with_bias, Index groups) {
  ConvParams p;
  p.weight = Tensor::zeros({cout, cin / groups, k, k, k});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin / groups * k * k * k));
  rng.fill_uniform(p.weight, -bound, bound);
  if (with_bias) {
    p.bias = Tensor::zeros({cout});
    rng.fill_uniform(p.bias, -bound, bound);
  }
  return p;
}

void ConvParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "weight"), weight});
  if (bias.defined()) out.push_back({join_name(prefix, "bias"), bias});
}

ConvBlock ConvBlock::make(Index cin, Index cout, Index k, Rng& rng, Index groups) {
  if (k < 1 || k % 2 == 0) throw ConfigError("conv block kernel must be odd, got " + std::to_string(k));
  if (cin % groups != 0 || cout % groups != 0) throw ConfigError("conv block channels not divisible by groups");
  ConvBlock b;
  b.k = k;
  b.groups = groups;
  ConvParams conv = ConvParams::make(cin, cout, k, rng, true, groups);
  b.weight = conv.weight;
  b.bias = conv.bias;
  b.bn = NormParams::make(cout);
  b.stats = BatchNormStats::make(cout);
  return b;
}

Tensor ConvBlock::forward(const Tensor& volume, bool training) {
  Tensor y = conv3d(volume, weight, bias, 1, (k - 1) / 2, groups);
  y = batch_norm(y, bn.gamma, bn.beta, stats, training);
  return gelu(y);
}

void ConvBlock::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "conv.weight"), weight});
  out.push_back({join_name(prefix, "conv.bias"), bias});
  bn.collect(join_name(prefix, "bn"), out);
  out.push_back({join_name(prefix, "bn.running_mean"), stats.running_mean, false});
  out.push_back({join_name(prefix, "bn.running_var"), stats.running_var, false});
  out.push_back({join_name(prefix, "bn.num_batches_tracked"), stats.batches_tracked, false});
}

InceptionFF InceptionFF::make(Index channels, const BranchWidths& widths, Rng& rng) {
  InceptionFF f;
  f.channels = channels;
  f.widths = BranchChannels::resolve(widths, channels);
  const Index bn = f.widths.bottleneck;
  if (f.widths.b1) f.b1 = ConvBlock::make(channels, f.widths.b1, 1, rng);
  if (f.widths.b3) {
    f.b3_reduce = ConvBlock::make(channels, bn, 1, rng);
    f.b3 = ConvBlock::make(bn, f.widths.b3, 3, rng);
  }
  if (f.widths.b5) {
    f.b5_reduce = ConvBlock::make(channels, bn, 1, rng);
    f.b5_mid = ConvBlock::make(bn, bn, 3, rng);
    f.b5 = ConvBlock::make(bn, f.widths.b5, 3, rng);
  }
  if (f.widths.bp) f.bp = ConvBlock::make(channels, f.widths.bp, 1, rng);
  f.out = LinearParams::make(f.widths.total(), channels, rng);
  return f;
}

Tensor InceptionFF::forward(const Tensor& tokens, const Dims3& dims, bool training) {
  if (tokens.rank() != 3 || tokens.dim(2) != channels) {
    throw DimensionError("inception_ff: expected N x T x " + std::to_string(channels) + ", got " + shape_str(tokens.shape()));
  }
  if (tokens.dim(1) != dims[0] * dims[1] * dims[2]) {
    throw DimensionError("inception_ff: " + std::to_string(tokens.dim(1)) + " tokens do not fill volume " +
                         shape_str({dims[0], dims[1], dims[2]}));
  }
  const Tensor volume = to_volume(tokens, dims);
  std::vector<Tensor> branches;
  if (b1) branches.push_back(b1->forward(volume, training));
  if (b3) branches.push_back(b3->forward(b3_reduce->forward(volume, training), training));
  if (b5) branches.push_back(b5->forward(b5_mid->forward(b5_reduce->forward(volume, training), training), training));
  if (bp) branches.push_back(bp->forward(avg_pool3d(volume, 3, 1, 1), training));
  const Tensor merged = branches.size() == 1 ? branches.front() : concat(branches, 1);
  return out(to_tokens(merged));
}

void InceptionFF::collect(const std::string& prefix, ParamList& list) const {
  if (b1) b1->collect(join_name(prefix, "branch1"), list);
  if (b3) {
    b3_reduce->collect(join_name(prefix, "branch3.reduce"), list);
    b3->collect(join_name(prefix, "branch3.conv"), list);
  }
  if (b5) {
    b5_reduce->collect(join_name(prefix, "branch5.reduce"), list);
    b5_mid->collect(join_name(prefix, "branch5.conv1"), list);
    b5->collect(join_name(prefix, "branch5.conv2"), list);
  }
  if (bp) bp->collect(join_name(prefix, "branch_pool.conv"), list);
  out.collect(join_name(prefix, "out"), list);
}

MlpFF MlpFF::make(Index channels, double ratio, Rng& rng) {
  const Index hidden = mlp_hidden(channels, ratio);
  return {LinearParams::make(channels, hidden, rng), LinearParams::make(hidden, channels, rng)};
}

Tensor MlpFF::forward(const Tensor& tokens) const { return fc2(gelu(fc1(tokens))); }

void MlpFF::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(join_name(prefix, "fc1"), out);
  fc2.collect(join_name(prefix, "fc2"), out);
}

DepthwiseFF DepthwiseFF::make(Index channels, double ratio, Rng& rng) {
  const Index hidden = mlp_hidden(channels, ratio);
  DepthwiseFF f;
  f.fc1 = LinearParams::make(channels, hidden, rng);
  f.dw1 = ConvBlock::make(hidden, hidden, 3, rng, hidden);
  f.dw2 = ConvBlock::make(hidden, hidden, 3, rng, hidden);
  f.fc2 = LinearParams::make(hidden, channels, rng);
  return f;
}

Tensor DepthwiseFF::forward(const Tensor& tokens, const Dims3& dims, bool training) {
  if (tokens.rank() != 3 || tokens.dim(1) != dims[0] * dims[1] * dims[2]) {
    throw DimensionError("depthwise_ff: " + shape_str(tokens.shape()) + " does not fill volume " +
                         shape_str({dims[0], dims[1], dims[2]}));
  }
  Tensor v = to_volume(fc1(tokens), dims);
  v = dw2.forward(dw1.forward(v, training), training);
  return fc2(to_tokens(v));
}

void DepthwiseFF::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(join_name(prefix, "fc1"), out);
  dw1.collect(join_name(prefix, "dw1"), out);
  dw2.collect(join_name(prefix, "dw2"), out);
  fc2.collect(join_name(prefix, "fc2"), out);
}

FeedForward make_feed_forward(const BlockConfig& cfg, Rng& rng) {
  switch (cfg.ff_kind) {
    case FeedForwardKind::inception:
      return InceptionFF::make(cfg.channels, cfg.widths, rng);
    case FeedForwardKind::mlp:
      return MlpFF::make(cfg.channels, cfg.mlp_ratio, rng);
    case FeedForwardKind::depthwise:
      return DepthwiseFF::make(cfg.channels, cfg.mlp_ratio, rng);
  }
  throw ConfigError("unknown feed-forward kind");
}

Tensor feed_forward(FeedForward& ff, const Tensor& tokens, const Dims3& dims, bool training) {
  struct Visitor {
    const Tensor& tokens;
    const Dims3& dims;
    bool training;
    Tensor operator()(InceptionFF& f) const { return f.forward(tokens, dims, training); }
    Tensor operator()(MlpFF& f) const { return f.forward(tokens); }
    Tensor operator()(DepthwiseFF& f) const { return f.forward(tokens, dims, training); }
  };
  return std::visit(Visitor{tokens, dims, training}, ff);
}

SwinceptionBlock SwinceptionBlock::make(const BlockConfig& cfg, Rng& rng) {
  SwinceptionBlock b;
  b.norm1 = NormParams::make(cfg.channels);
  b.attn = AttentionParams::make(cfg.channels, cfg.heads, cfg.window, cfg.use_rel_bias, rng);
  b.norm2 = NormParams::make(cfg.channels);
  b.ff = make_feed_forward(cfg, rng);
  return b;
}

Tensor SwinceptionBlock::forward(const Tensor& tokens, const Dims3& dims, const WindowSpec& spec, bool training) {
  const Tensor normed = layer_norm(tokens, norm1.gamma, norm1.beta);
  const Tensor attended = to_tokens(w_mhsa(to_volume(normed, dims), attn, spec));
  const Tensor z = add(attended, tokens);
  const Tensor u = layer_norm(z, norm2.gamma, norm2.beta);
  return add(feed_forward(ff, u, dims, training), z);
}

void SwinceptionBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(join_name(prefix, "norm1"), out);
  attn.collect(join_name(prefix, "attn"), out);
  norm2.collect(join_name(prefix, "norm2"), out);
  std::visit([&](const auto& f) { f.collect(join_name(prefix, "ff"), out); }, ff);
}

}  // namespace swinc
