#include "swinc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "op_helpers.hpp"

namespace swinc {

Metrics dice_score(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, Index num_classes) {
  if (pred.size() != truth.size()) {
    throw DimensionError("dice_score: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
                         " labels");
  }
  if (num_classes < 1) throw ConfigError("dice_score: num_classes must be >= 1");
  std::vector<Index> inter(static_cast<size_t>(num_classes)), np(inter.size()), nt(inter.size());
  for (size_t v = 0; v < pred.size(); ++v) {
    const auto p = static_cast<size_t>(pred[v]), t = static_cast<size_t>(truth[v]);
    if (p >= inter.size() || t >= inter.size()) throw DimensionError("dice_score: class id out of range");
    ++np[p];
    ++nt[t];
    if (p == t) ++inter[p];
  }
  Metrics m;
  for (size_t c = 0; c < inter.size(); ++c) {
    const Index denom = np[c] + nt[c];
    m.dice.push_back(denom == 0 ? 1.0 : 2.0 * static_cast<double>(inter[c]) / static_cast<double>(denom));
  }
  if (num_classes > 1) {
    double s = 0.0;
    for (size_t c = 1; c < m.dice.size(); ++c) s += m.dice[c];
    m.mean_foreground = s / static_cast<double>(num_classes - 1);
  }
  return m;
}

std::vector<std::int32_t> label_ids(const Tensor& labels, Index num_classes) {
  std::vector<std::int32_t> ids;
  ids.reserve(static_cast<size_t>(labels.numel()));
  for (double v : labels.data()) {
    const double r = std::round(v);
    if (r != v || r < 0 || r >= static_cast<double>(num_classes)) {
      throw DimensionError("label value " + std::to_string(v) + " is not a class id in [0, " + std::to_string(num_classes) + ")");
    }
    ids.push_back(static_cast<std::int32_t>(r));
  }
  return ids;
}

std::vector<std::int32_t> argmax_labels(const Tensor& logits) {
  if (logits.rank() != 5) throw DimensionError("argmax_labels: expected N x K x D x H x W, got " + shape_str(logits.shape()));
  const Index n = logits.dim(0), k = logits.dim(1), v = logits.numel() / (n * k);
  const auto x = logits.data();
  std::vector<std::int32_t> out(static_cast<size_t>(n * v));
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < v; ++i) {
      Index best = 0;
      for (Index c = 1; c < k; ++c) {
        if (x[static_cast<size_t>((b * k + c) * v + i)] > x[static_cast<size_t>((b * k + best) * v + i)]) best = c;
      }
      out[static_cast<size_t>(b * v + i)] = static_cast<std::int32_t>(best);
    }
  return out;
}

Tensor dice_ce_loss(const Tensor& logits, const Tensor& labels, double dice_weight, double ce_weight) {
  if (logits.rank() != 5) throw DimensionError("dice_ce_loss: expected N x K x D x H x W logits, got " + shape_str(logits.shape()));
  const Index n = logits.dim(0), k = logits.dim(1);
  const Index v = logits.numel() / (n * k);
  const Shape want{n, logits.dim(2), logits.dim(3), logits.dim(4)};
  if (labels.shape() != want) {
    throw DimensionError("dice_ce_loss: labels " + shape_str(labels.shape()) + " should be " + shape_str(want));
  }
  const auto ids = std::make_shared<std::vector<std::int32_t>>(label_ids(labels, k));

  // Softmax over classes, per voxel.
  const auto x = logits.data();
  auto prob = std::make_shared<std::vector<double>>(x.size());
  auto& p = *prob;
  double ce = 0.0;
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < v; ++i) {
      double mx = x[static_cast<size_t>(b * k * v + i)];
      for (Index c = 1; c < k; ++c) mx = std::max(mx, x[static_cast<size_t>((b * k + c) * v + i)]);
      double z = 0.0;
      for (Index c = 0; c < k; ++c) {
        const auto f = static_cast<size_t>((b * k + c) * v + i);
        p[f] = std::exp(x[f] - mx);
        z += p[f];
      }
      for (Index c = 0; c < k; ++c) p[static_cast<size_t>((b * k + c) * v + i)] /= z;
      const Index y = (*ids)[static_cast<size_t>(b * v + i)];
      ce += mx + std::log(z) - x[static_cast<size_t>((b * k + y) * v + i)];
    }
  ce /= static_cast<double>(n * v);

  // Soft Dice per (sample, class): (2I + eps) / (S + eps).
  auto inter = std::make_shared<std::vector<double>>(static_cast<size_t>(n * k));
  auto total = std::make_shared<std::vector<double>>(static_cast<size_t>(n * k));
  double dice_mean = 0.0;
  for (Index b = 0; b < n; ++b)
    for (Index c = 0; c < k; ++c) {
      double in = 0.0, s = 0.0;
      for (Index i = 0; i < v; ++i) {
        const double pv = p[static_cast<size_t>((b * k + c) * v + i)];
        const bool hit = (*ids)[static_cast<size_t>(b * v + i)] == c;
        s += pv + (hit ? 1.0 : 0.0);
        if (hit) in += pv;
      }
      (*inter)[static_cast<size_t>(b * k + c)] = in;
      (*total)[static_cast<size_t>(b * k + c)] = s;
      dice_mean += (2.0 * in + kDiceSmooth) / (s + kDiceSmooth);
    }
  dice_mean /= static_cast<double>(n * k);

  const double loss = dice_weight * (1.0 - dice_mean) + ce_weight * ce;
  auto li = logits.impl();
  return detail::make_result(
      "dice_ce_loss", {1}, {loss}, {logits}, [li, prob, ids, inter, total, n, k, v, dice_weight, ce_weight](const detail::TensorImpl& o) {
        double* g = detail::grad_of(li);
        if (!g) return;
        const double go = o.grad[0];
        const double wd = go * dice_weight / static_cast<double>(n * k);
        const double wc = go * ce_weight / static_cast<double>(n * v);
        const auto& p = *prob;
        std::vector<double> gp(static_cast<size_t>(k));
        for (Index b = 0; b < n; ++b)
          for (Index i = 0; i < v; ++i) {
            const Index y = (*ids)[static_cast<size_t>(b * v + i)];
            // d(-dice)/dp, then through the softmax; CE enters as p - onehot.
            double dot = 0.0;
            for (Index c = 0; c < k; ++c) {
              const auto nc = static_cast<size_t>(b * k + c);
              const double s = (*total)[nc] + kDiceSmooth;
              const double num = 2.0 * (*inter)[nc] + kDiceSmooth;
              const double dd = ((y == c ? 2.0 : 0.0) * s - num) / (s * s);
              gp[static_cast<size_t>(c)] = -wd * dd;
              dot += gp[static_cast<size_t>(c)] * p[static_cast<size_t>((b * k + c) * v + i)];
            }
            for (Index c = 0; c < k; ++c) {
              const auto f = static_cast<size_t>((b * k + c) * v + i);
              g[f] += p[f] * (gp[static_cast<size_t>(c)] - dot) + wc * (p[f] - (y == c ? 1.0 : 0.0));
            }
          }
      });
}

}  // namespace swinc
