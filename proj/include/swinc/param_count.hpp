#pragma once

#include <string>
#include <vector>

#include "swinc/model.hpp"

namespace swinc {

// Closed-form trainable-parameter counts, computed from the configuration
// alone. Normalization running statistics are buffers and not counted.
namespace count {

Index linear(Index in, Index out, bool bias = true);
Index conv(Index cin, Index cout, Index k, bool bias = true, Index groups = 1);
Index norm(Index channels);
Index conv_block(Index cin, Index cout, Index k, Index groups = 1);
Index attention(Index channels, Index heads, Index window, bool rel_bias);
Index feed_forward(const BlockConfig& cfg);
Index block(const BlockConfig& cfg);
Index patch_merge(MergeKind kind, Index channels);
Index residual_block(Index cin, Index cout);
Index upsample_block(Index cin, Index cout);
Index decoder(const ModelConfig& cfg);

}  // namespace count

/// Analytic totals grouped as embed, stages, merges, decoder, head.
ParamBreakdown count_params(const ModelConfig& config);
Index total(const ParamBreakdown& breakdown);

/// One ablation cell: encoder feed-forward, decoder wiring, merge kind, MLP ratio.
struct AblationRow {
  std::string encoder;
  DecoderKind decoder = DecoderKind::swinception;
  MergeKind merge = MergeKind::linear;
  double mlp_ratio = 4.0;
  Index params = 0;
};

/// The ten encoder/decoder/merge/ratio cells of the ablation grid, counted
/// on top of `base` (whose widths and depths are kept).
std::vector<AblationRow> ablation_table(const ModelConfig& base);

}  // namespace swinc
