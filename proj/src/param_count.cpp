#include "swinc/param_count.hpp"

namespace swinc {
namespace count {

Index linear(Index in, Index out, bool bias) { return in * out + (bias ? out : 0); }

Index conv(Index cin, Index cout, Index k, bool bias, Index groups) {
  return cout * (cin / groups) * k * k * k + (bias ? cout : 0);
}

Index norm(Index channels) { return 2 * channels; }

Index conv_block(Index cin, Index cout, Index k, Index groups) { return conv(cin, cout, k, true, groups) + norm(cout); }

Index attention(Index channels, Index heads, Index window, bool rel_bias) {
  const Index span = 2 * window - 1;
  return linear(channels, 3 * channels) + linear(channels, channels) + (rel_bias ? span * span * span * heads : 0);
}

Index feed_forward(const BlockConfig& cfg) {
  const Index c = cfg.channels;
  switch (cfg.ff_kind) {
    case FeedForwardKind::mlp: {
      const Index hidden = mlp_hidden(c, cfg.mlp_ratio);
      return linear(c, hidden) + linear(hidden, c);
    }
    case FeedForwardKind::depthwise: {
      const Index hidden = mlp_hidden(c, cfg.mlp_ratio);
      return linear(c, hidden) + 2 * conv_block(hidden, hidden, 3, hidden) + linear(hidden, c);
    }
    case FeedForwardKind::inception:
      break;
  }
  const BranchChannels w = BranchChannels::resolve(cfg.widths, c);
  const Index r = w.bottleneck;
  Index n = 0;
  if (w.b1) n += conv_block(c, w.b1, 1);
  if (w.b3) n += conv_block(c, r, 1) + conv_block(r, w.b3, 3);
  if (w.b5) n += conv_block(c, r, 1) + conv_block(r, r, 3) + conv_block(r, w.b5, 3);
  if (w.bp) n += conv_block(c, w.bp, 1);
  return n + linear(w.total(), c);
}

Index block(const BlockConfig& cfg) {
  return 2 * norm(cfg.channels) + attention(cfg.channels, cfg.heads, cfg.window, cfg.use_rel_bias) + feed_forward(cfg);
}

Index patch_merge(MergeKind kind, Index c) {
  return kind == MergeKind::linear ? norm(8 * c) + linear(8 * c, 2 * c) : conv(c, 2 * c, 3) + norm(2 * c);
}

Index residual_block(Index cin, Index cout) {
  const Index proj = cin == cout ? 0 : conv(cin, cout, 1, false) + norm(cout);
  return conv(cin, cout, 3, false) + conv(cout, cout, 3, false) + 2 * norm(cout) + proj + 2 * cout;
}

Index upsample_block(Index cin, Index cout) { return cin * cout * 8 + norm(cout) + cout; }

Index decoder(const ModelConfig& cfg) {
  // Level widths C0 * 2^i; taps are pre-merge stage outputs (swinception)
  // or post-merge ones (swinunetr, whose level-3 tap bypasses its block).
  const Index c0 = cfg.base_dim;
  const bool pre = cfg.decoder_kind == DecoderKind::swinception;
  Index n = 0;
  for (int i = 0; i < kNumLevels; ++i) {
    const Index width = c0 << i;
    const Index tap = pre ? (i == 0 ? c0 : c0 << (i - 1)) : width;
    if (pre || i != 3) n += residual_block(tap, width);
  }
  for (int i = 0; i < kNumLevels - 1; ++i) {
    const Index width = c0 << i;
    const bool same_scale = pre && i == 0;
    if (same_scale) {
      n += residual_block(2 * width + width, width);
    } else {
      n += upsample_block(2 * width, width) + residual_block(2 * width, width);
    }
  }
  n += upsample_block(c0, c0) + residual_block(cfg.in_channels, c0) + residual_block(2 * c0, c0);
  return n;
}

}  // namespace count

ParamBreakdown count_params(const ModelConfig& config) {
  config.validate();
  ParamBreakdown b{{"embed", 0}, {"stages", 0}, {"merges", 0}, {"decoder", 0}, {"head", 0}};
  b["embed"] = count::conv(config.in_channels, config.base_dim, 2);
  for (int s = 0; s < kNumStages; ++s) {
    b["stages"] += config.depths[s] * count::block(config.block_config(s));
    if (s < config.merge_count()) b["merges"] += count::patch_merge(config.merge_kind, config.stage_channels(s));
  }
  b["decoder"] = count::decoder(config);
  b["head"] = count::conv(config.base_dim, config.num_classes, 1);
  return b;
}

Index total(const ParamBreakdown& breakdown) {
  Index n = 0;
  for (const auto& [name, v] : breakdown) n += v;
  return n;
}

std::vector<AblationRow> ablation_table(const ModelConfig& base) {
  struct Cell {
    FeedForwardKind ff;
    DecoderKind decoder;
    MergeKind merge;
    double ratio;
  };
  using F = FeedForwardKind;
  using D = DecoderKind;
  using M = MergeKind;
  const Cell cells[] = {
      {F::mlp, D::swinunetr, M::linear, 4.0},       {F::mlp, D::swinunetr, M::linear, 7.0},
      {F::inception, D::swinunetr, M::linear, 4.0}, {F::mlp, D::swinunetr, M::conv, 7.0},
      {F::inception, D::swinunetr, M::conv, 4.0},   {F::mlp, D::swinception, M::linear, 4.0},
      {F::mlp, D::swinception, M::linear, 7.0},     {F::inception, D::swinception, M::linear, 4.0},
      {F::mlp, D::swinception, M::conv, 7.0},       {F::inception, D::swinception, M::conv, 4.0},
  };
  std::vector<AblationRow> rows;
  for (const Cell& c : cells) {
    ModelConfig cfg = base;
    cfg.ff_kind = c.ff;
    cfg.decoder_kind = c.decoder;
    cfg.merge_kind = c.merge;
    cfg.mlp_ratio = c.ratio;
    rows.push_back({c.ff == F::mlp ? "swin" : "swinception", c.decoder, c.merge, c.ratio, total(count_params(cfg))});
  }
  return rows;
}

}  // namespace swinc
