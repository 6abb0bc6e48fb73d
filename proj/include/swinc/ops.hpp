#pragma once

// Differentiable tensor operations. Every op validates shapes, rejects
// non-finite results with NumericError, and records a TapeNode when
// gradient recording is on and an input requires grad.
//
// Layout conventions: volumes are N x C x D x H x W, token sequences are
// N x T x C with T = D*H*W enumerated D-major, then H, then W.

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "swinc/tensor.hpp"

namespace swinc {

using Dims3 = std::array<Index, 3>;

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kMaskValue = -1e9;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);

/// out[i] = a[index[i]], or 0 where index[i] < 0. Backward scatter-adds, so
/// the map need not be injective.
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<Index>> index, Shape out_shape);

Tensor concat(std::span<const Tensor> parts, int axis);

// N x C x D x H x W <-> N x T x C
Tensor to_tokens(const Tensor& volume);
Tensor to_volume(const Tensor& tokens, const Dims3& dims);

// Zero-pad or crop the trailing (high-index) side of the three spatial axes.
Tensor pad_spatial(const Tensor& volume, const Dims3& padded);
Tensor crop_spatial(const Tensor& volume, const Dims3& cropped);

/// Cross-correlation with zero padding. `bias` may be undefined.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Index stride, Index padding,
              Index groups = 1);

/// Transposed convolution, weight Cin x Cout x k x k x k, no padding.
/// Requires k >= stride; output extent is (in - 1) * stride + k.
Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Index stride);

Tensor avg_pool3d(const Tensor& input, Index k = 3, Index stride = 1, Index padding = 1);

/// Affine map over the last axis; weight is Dout x Din. `bias` may be undefined.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = kNormEps);

/// Running statistics for batch norm. `batches_tracked` stays 0 until the
/// first training-mode forward (or a checkpoint load) populates the stats.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  Tensor batches_tracked;  // shape [1]

  static BatchNormStats make(Index channels);
  bool populated() const { return batches_tracked.defined() && batches_tracked.data()[0] > 0.0; }
};

/// Per-channel (axis 1) normalization over every other axis. Training mode
/// uses batch statistics and updates `stats`; eval mode uses the running
/// statistics and throws StateError if they were never populated.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training, double eps = kNormEps, double momentum = kBatchNormMomentum);

/// Per-sample, per-channel normalization over the spatial axes.
Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = kNormEps);

// Exact erf form.
Tensor gelu(const Tensor& input);
// Slope per channel on axis 1 (or a single shared slope of shape [1]).
Tensor prelu(const Tensor& input, const Tensor& slope);

/// Softmax over the last axis, after adding `mask` (whose shape must equal
/// the trailing dimensions of `input`; it is broadcast over the rest).
Tensor softmax(const Tensor& input, const Tensor& mask = {});

/// Fused windowed multi-head attention on packed projections.
/// qkv: [windows, T, 3C]; bias: [heads, T, T] (optional, differentiable);
/// mask: [mask_windows, T, T] (optional, constant). Returns [windows, T, C].
Tensor window_attention(const Tensor& qkv, Index heads, const Tensor& bias, const Tensor& mask, double scale);

}  // namespace swinc
