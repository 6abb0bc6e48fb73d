#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "swinc/ops.hpp"

namespace swinc {

struct Metrics {
  std::vector<double> dice;  // per class, background included
  double mean_foreground = 0.0;
};

/// Per-class Dice 2|P&T| / (|P| + |T|); a class absent from both scores 1.
/// The mean skips class 0.
Metrics dice_score(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, Index num_classes);

/// Integral label tensor -> class ids, validated against [0, num_classes).
std::vector<std::int32_t> label_ids(const Tensor& labels, Index num_classes);

/// Channel argmax of N x K x D x H x W logits, flattened N, D, H, W.
std::vector<std::int32_t> argmax_labels(const Tensor& logits);

inline constexpr double kDiceSmooth = 1e-5;

/// dice_weight * (1 - mean soft Dice over samples and classes) +
/// ce_weight * mean cross-entropy, on softmax(logits) over axis 1.
/// logits: N x K x D x H x W; labels: N x D x H x W with integral ids.
Tensor dice_ce_loss(const Tensor& logits, const Tensor& labels, double dice_weight = 1.0, double ce_weight = 1.0);

}  // namespace swinc
