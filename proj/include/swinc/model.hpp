#pragma once

#include <map>
#include <string>

#include "swinc/decoder.hpp"

namespace swinc {

/// Encoder + decoder segmentation network producing per-voxel logits.
struct SegmentationModel {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;
  bool training = true;

  /// Allocates and initializes every tensor; trainable ones require grad.
  static SegmentationModel make(const ModelConfig& config, std::uint64_t seed);

  Tensor forward(const Tensor& input);
  /// Every named tensor, buffers included, in a stable order.
  ParamList parameters() const;
  void zero_grad() const;
};

/// Trainable-scalar tally grouped as embed, stages, merges, decoder, head.
using ParamBreakdown = std::map<std::string, Index>;

ParamBreakdown allocated_breakdown(const ParamList& params);

/// Marks every trainable entry as requiring grad.
void require_grad(const ParamList& params);

}  // namespace swinc
