#pragma once

#include <array>
#include <string>
#include <vector>

#include "swinc/blocks.hpp"

namespace swinc {

enum class MergeKind { linear, conv };
enum class DecoderKind { swinception, swinunetr };

std::string to_string(MergeKind kind);
std::string to_string(DecoderKind kind);
MergeKind parse_merge_kind(const std::string& s);
DecoderKind parse_decoder_kind(const std::string& s);

inline constexpr int kNumStages = 4;
// Every input extent is padded to a multiple of this (five halvings).
inline constexpr Index kInputMultiple = 32;

struct ModelConfig {
  Index in_channels = 1;
  Index base_dim = 48;
  std::array<Index, kNumStages> depths{2, 2, 2, 2};
  std::array<Index, kNumStages> heads{3, 6, 12, 24};
  Index window = 4;
  FeedForwardKind ff_kind = FeedForwardKind::inception;
  BranchWidths widths;
  double mlp_ratio = 4.0;
  MergeKind merge_kind = MergeKind::conv;
  DecoderKind decoder_kind = DecoderKind::swinception;
  Index num_classes = 14;
  bool use_rel_bias = true;

  /// Small widths for single-core training and full-model gradient checks.
  static ModelConfig toy();

  void validate() const;
  Index stage_channels(int stage) const { return base_dim << stage; }
  BlockConfig block_config(int stage) const;
  /// Merges performed by the encoder: 3 with pre-merge taps, 4 with post-merge taps.
  int merge_count() const { return decoder_kind == DecoderKind::swinception ? 3 : 4; }
};

/// Multi-scale encoder outputs, finest first. With pre-merge taps (the
/// swinception decoder) level 0 is the patch embedding and level i is the
/// output of stage i; levels 0 and 1 share resolution. With post-merge taps
/// (swinunetr decoder) level i > 0 is stage i after its merge.
struct FeaturePyramid {
  std::vector<Tensor> levels;
  Dims3 padded{};  // extents of the padded raw input
  Dims3 input{};   // extents of the raw input before padding
};

struct PatchMerge {
  MergeKind kind = MergeKind::conv;
  Index channels = 0;
  NormParams norm;      // over 8C (linear) or 2C (conv)
  LinearParams reduce;  // linear kind: 8C -> 2C
  ConvParams conv;      // conv kind: k3 s2 p1, C -> 2C

  static PatchMerge make(MergeKind kind, Index channels, Rng& rng);
  /// N x C x D x H x W -> N x 2C x D/2 x H/2 x W/2. Extents must be even.
  Tensor forward(const Tensor& volume) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// N x C x D x H x W -> N x D/2*H/2*W/2 x 8C, each token holding one 2x2x2
/// neighbourhood with offsets ordered (d, h, w), channel fastest.
Tensor gather_neighbourhoods(const Tensor& volume);

struct Encoder {
  ModelConfig config;
  ConvParams embed;  // k2 s2
  std::array<std::vector<SwinceptionBlock>, kNumStages> stages;
  std::vector<PatchMerge> merges;

  static Encoder make(const ModelConfig& config, Rng& rng);
  Tensor patch_embed(const Tensor& input) const;
  /// Runs one stage on a volume; blocks alternate regular and shifted windows.
  Tensor run_stage(int stage, const Tensor& volume, bool training);
  /// Pads to multiples of kInputMultiple. Extents below it raise ConfigError.
  FeaturePyramid forward(const Tensor& input, bool training);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Spatial extents of a feature map.
inline Dims3 spatial_dims(const Tensor& volume) { return {volume.dim(2), volume.dim(3), volume.dim(4)}; }

}  // namespace swinc
