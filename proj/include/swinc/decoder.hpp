#pragma once

#include <array>
#include <optional>
#include <vector>

#include "swinc/encoder.hpp"

namespace swinc {

/// conv3 -> IN -> PReLU -> conv3 -> IN, plus the input (projected by
/// 1x1x1 conv + IN when channel counts differ), then PReLU.
struct ResidualBlock {
  ConvParams conv1, conv2;
  NormParams norm1, norm2;
  std::optional<ConvParams> proj;
  std::optional<NormParams> proj_norm;
  Tensor slope1, slope2;  // per-channel PReLU slopes

  static ResidualBlock make(Index cin, Index cout, Rng& rng);
  Tensor forward(const Tensor& volume) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Transposed conv k2 s2 (no bias) -> IN -> PReLU. Doubles every extent.
struct UpsampleBlock {
  Tensor weight;  // [cin, cout, 2, 2, 2]
  NormParams norm;
  Tensor slope;

  static UpsampleBlock make(Index cin, Index cout, Rng& rng);
  Tensor forward(const Tensor& volume) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

inline constexpr int kNumLevels = kNumStages + 1;

/// Channel and resolution layout of the decoder for a model config.
struct DecoderPlan {
  std::array<Index, kNumLevels> tap_channels{};  // encoder output channels per level
  std::array<int, kNumLevels> tap_scale{};       // log2 of the downsampling factor per level
  std::array<Index, kNumLevels> width{};         // decoder channels per level
  std::array<bool, kNumLevels> skip_block{};     // false: the tap enters the decoder unchanged

  static DecoderPlan make(const ModelConfig& config);
  bool upsamples_into(int level) const { return tap_scale[level + 1] != tap_scale[level]; }
};

struct Decoder {
  ModelConfig config;
  DecoderPlan plan;
  std::array<std::optional<ResidualBlock>, kNumLevels> skip;  // tap -> width
  std::array<std::optional<UpsampleBlock>, kNumLevels - 1> up;
  std::array<ResidualBlock, kNumLevels - 1> fuse;
  UpsampleBlock final_up;
  ResidualBlock stem;
  ResidualBlock final_fuse;
  ConvParams head;  // 1x1x1 with bias

  static Decoder make(const ModelConfig& config, Rng& rng);
  /// Logits at the unpadded input resolution.
  Tensor forward(const FeaturePyramid& pyr, const Tensor& raw) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace swinc
